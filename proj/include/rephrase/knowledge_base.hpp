#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rephrase/errors.hpp"

namespace rephrase {

struct Document {
    std::string doc_id;
    std::string title;
    std::string body; // non-empty
};

struct Chunk {
    std::string chunk_id; // doc_id + "#" + zero-padded ordinal
    std::string doc_id;
    std::string text;
    std::size_t word_count = 0; // whitespace tokens
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct RetrievalResult {
    std::string chunk_id;
    double score = 0.0;
    std::string text;
};

class InvalidParamsError : public UserError {
public:
    explicit InvalidParamsError(const std::string& what) : UserError(what) {}
};

class EmptyCorpusError : public UserError {
public:
    EmptyCorpusError() : UserError("knowledge base corpus is empty") {}
};

class UnknownChunkError : public UserError {
public:
    explicit UnknownChunkError(const std::string& chunk_id)
        : UserError("unknown chunk id: '" + chunk_id + "'") {}
};

// Greedy word-window split on whitespace tokens. Consecutive chunks share
// exactly overlap_words words except possibly the last; concatenating the
// non-overlapped spans reconstructs the token stream.
// pre: 0 <= overlap_words < max_words.
std::vector<Chunk> chunk_document(const Document& doc, std::size_t max_words,
                                  std::size_t overlap_words);

// Index tokenization: lowercase, alphanumeric-run tokens, no stemming, no
// stopword removal.
std::vector<std::string> index_tokens(std::string_view text);

// Deterministic lexical index with Okapi weighting. Immutable after build;
// concurrent score/retrieve calls are safe.
class KnowledgeIndex {
public:
    static KnowledgeIndex build(std::vector<Chunk> chunks, Bm25Params params = {});

    // Sum over query term occurrences t of
    //   idf(t) * tf * (k1+1) / (tf + k1*(1 - b + b*len/avg_len))
    // with idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)). Terms absent from the
    // index contribute 0.
    double score(std::string_view query, const std::string& chunk_id) const;

    // Top-k chunks by score, descending; ties broken by ascending chunk_id.
    // Chunks scoring 0 are excluded even if fewer than k remain.
    std::vector<RetrievalResult> retrieve(std::string_view query, std::size_t k) const;

    const std::vector<Chunk>& chunks() const { return chunks_; }
    std::size_t size() const { return chunks_.size(); }
    double avg_chunk_len() const { return avg_chunk_len_; }
    std::size_t term_doc_freq(const std::string& term) const;
    const Bm25Params& params() const { return params_; }

    // Persisted as a single JSON file with an embedded format-version integer;
    // statistics are rebuilt deterministically on load.
    void save(const std::filesystem::path& path) const;
    static KnowledgeIndex load(const std::filesystem::path& path);

private:
    KnowledgeIndex() = default;
    double score_tokens(std::size_t chunk_pos, const std::vector<std::string>& query_tokens) const;

    std::vector<Chunk> chunks_;
    std::unordered_map<std::string, std::size_t> chunk_pos_;
    std::vector<std::unordered_map<std::string, std::size_t>> chunk_term_freq_;
    std::unordered_map<std::string, std::size_t> term_doc_freq_;
    double avg_chunk_len_ = 0.0;
    Bm25Params params_;
};

// Reads a corpus directory of plain-text files (one Document per file,
// filename stem = doc_id), sorted by filename for determinism.
std::vector<Document> load_corpus_dir(const std::filesystem::path& dir);

// Chunking defaults: paragraph-scale passages small enough to inject several
// per prompt.
inline constexpr std::size_t kDefaultMaxChunkWords = 300;
inline constexpr std::size_t kDefaultOverlapWords = 50;

} // namespace rephrase
