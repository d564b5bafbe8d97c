#pragma once

#include <stdexcept>
#include <string>

namespace rephrase {

// Errors caused by bad user input (malformed files, unknown ids, invalid
// flags). The CLI maps these to exit code 1; everything else exits 2.
class UserError : public std::runtime_error {
public:
    explicit UserError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace rephrase
