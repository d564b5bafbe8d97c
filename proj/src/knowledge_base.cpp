#include "rephrase/knowledge_base.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace rephrase {

namespace {

using nlohmann::json;

constexpr int kIndexFormatVersion = 1;

std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

std::string join(const std::vector<std::string>& words, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out.push_back(' ');
        out += words[i];
    }
    return out;
}

std::string make_chunk_id(const std::string& doc_id, std::size_t ordinal) {
    char suffix[16];
    std::snprintf(suffix, sizeof(suffix), "#%04zu", ordinal);
    return doc_id + suffix;
}

} // namespace

std::vector<Chunk> chunk_document(const Document& doc, std::size_t max_words,
                                  std::size_t overlap_words) {
    if (max_words == 0 || overlap_words >= max_words)
        throw InvalidParamsError("chunking requires 0 <= overlap_words < max_words (got max_words=" +
                                 std::to_string(max_words) + ", overlap_words=" +
                                 std::to_string(overlap_words) + ")");

    const auto words = whitespace_tokens(doc.body);
    std::vector<Chunk> chunks;
    if (words.empty()) return chunks;

    const std::size_t stride = max_words - overlap_words;
    std::size_t ordinal = 0;
    for (std::size_t pos = 0;; pos += stride) {
        const std::size_t end = std::min(pos + max_words, words.size());
        Chunk c;
        c.chunk_id = make_chunk_id(doc.doc_id, ordinal++);
        c.doc_id = doc.doc_id;
        c.text = join(words, pos, end);
        c.word_count = end - pos;
        chunks.push_back(std::move(c));
        if (end == words.size()) break;
    }
    return chunks;
}

std::vector<std::string> index_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char raw : text) {
        unsigned char ch = static_cast<unsigned char>(raw);
        char lower = 0;
        if ((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9')) lower = static_cast<char>(ch);
        else if (ch >= 'A' && ch <= 'Z') lower = static_cast<char>(ch - 'A' + 'a');
        if (lower) {
            cur.push_back(lower);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

KnowledgeIndex KnowledgeIndex::build(std::vector<Chunk> chunks, Bm25Params params) {
    if (chunks.empty()) throw EmptyCorpusError();
    if (params.k1 <= 0.0 || params.b < 0.0 || params.b > 1.0)
        throw InvalidParamsError("BM25 requires k1 > 0 and 0 <= b <= 1");

    KnowledgeIndex idx;
    idx.params_ = params;
    idx.chunks_ = std::move(chunks);
    idx.chunk_term_freq_.resize(idx.chunks_.size());

    double total_len = 0.0;
    for (std::size_t i = 0; i < idx.chunks_.size(); ++i) {
        const auto& chunk = idx.chunks_[i];
        idx.chunk_pos_.emplace(chunk.chunk_id, i);
        total_len += static_cast<double>(chunk.word_count);
        auto& tf = idx.chunk_term_freq_[i];
        for (const auto& tok : index_tokens(chunk.text)) ++tf[tok];
        for (const auto& [term, count] : tf) {
            (void)count;
            ++idx.term_doc_freq_[term];
        }
    }
    idx.avg_chunk_len_ = total_len / static_cast<double>(idx.chunks_.size());
    return idx;
}

std::size_t KnowledgeIndex::term_doc_freq(const std::string& term) const {
    auto it = term_doc_freq_.find(term);
    return it == term_doc_freq_.end() ? 0 : it->second;
}

double KnowledgeIndex::score_tokens(std::size_t chunk_pos,
                                    const std::vector<std::string>& query_tokens) const {
    const double n = static_cast<double>(chunks_.size());
    const double len = static_cast<double>(chunks_[chunk_pos].word_count);
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * len / avg_chunk_len_);
    const auto& tf_map = chunk_term_freq_[chunk_pos];

    double score = 0.0;
    for (const auto& term : query_tokens) {
        auto df_it = term_doc_freq_.find(term);
        if (df_it == term_doc_freq_.end()) continue;
        auto tf_it = tf_map.find(term);
        if (tf_it == tf_map.end()) continue;
        const double df = static_cast<double>(df_it->second);
        const double tf = static_cast<double>(tf_it->second);
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        score += idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return score;
}

double KnowledgeIndex::score(std::string_view query, const std::string& chunk_id) const {
    auto it = chunk_pos_.find(chunk_id);
    if (it == chunk_pos_.end()) throw UnknownChunkError(chunk_id);
    return score_tokens(it->second, index_tokens(query));
}

std::vector<RetrievalResult> KnowledgeIndex::retrieve(std::string_view query,
                                                      std::size_t k) const {
    if (k == 0) throw InvalidParamsError("retrieve requires k >= 1");
    const auto query_tokens = index_tokens(query);

    std::vector<RetrievalResult> scored;
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        const double s = score_tokens(i, query_tokens);
        if (s > 0.0) scored.push_back({chunks_[i].chunk_id, s, chunks_[i].text});
    }
    std::sort(scored.begin(), scored.end(), [](const RetrievalResult& a, const RetrievalResult& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

void KnowledgeIndex::save(const std::filesystem::path& path) const {
    json chunks = json::array();
    for (const auto& c : chunks_) {
        chunks.push_back({{"chunk_id", c.chunk_id},
                          {"doc_id", c.doc_id},
                          {"text", c.text},
                          {"word_count", c.word_count}});
    }
    json doc = {
        {"format_version", kIndexFormatVersion},
        {"k1", params_.k1},
        {"b", params_.b},
        {"chunks", std::move(chunks)},
    };
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write index file: " + path.string());
    out << doc.dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

KnowledgeIndex KnowledgeIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot open index file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw UserError("invalid index file " + path.string() + ": " + e.what());
    }
    const int version = doc.value("format_version", -1);
    if (version != kIndexFormatVersion)
        throw UserError("unsupported index format version " + std::to_string(version) +
                        " in " + path.string());

    Bm25Params params{doc.at("k1").get<double>(), doc.at("b").get<double>()};
    std::vector<Chunk> chunks;
    for (const auto& obj : doc.at("chunks")) {
        Chunk c;
        c.chunk_id = obj.at("chunk_id").get<std::string>();
        c.doc_id = obj.at("doc_id").get<std::string>();
        c.text = obj.at("text").get<std::string>();
        c.word_count = obj.at("word_count").get<std::size_t>();
        chunks.push_back(std::move(c));
    }
    return build(std::move(chunks), params);
}

std::vector<Document> load_corpus_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw UserError("corpus path is not a directory: " + dir.string());

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::vector<Document> docs;
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        Document doc;
        doc.doc_id = file.stem().string();
        doc.title = doc.doc_id;
        doc.body = buf.str();
        if (doc.body.find_first_not_of(" \t\r\n") == std::string::npos)
            throw UserError("empty corpus document: " + file.string());
        docs.push_back(std::move(doc));
    }
    return docs;
}

} // namespace rephrase
