#include "finrag/corpus.hpp"

#include <algorithm>

#include "finrag/error.hpp"
#include "finrag/util.hpp"

namespace finrag {

namespace {

bool is_ws(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

}  // namespace

std::vector<std::string> Tokenizer::tokenize(std::string_view text) const {
  std::vector<std::string> out;
  for (auto& t : tokenize_spans(text)) out.push_back(std::move(t.text));
  return out;
}

std::vector<Token> WordTokenizer::tokenize_spans(std::string_view text) const {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    auto c = static_cast<unsigned char>(text[i]);
    if (is_ws(c)) {
      ++i;
    } else if (is_punct(c)) {
      tokens.push_back({std::string(1, text[i]), i, i + 1});
      ++i;
    } else {
      std::size_t b = i;
      while (i < n && !is_ws(static_cast<unsigned char>(text[i])) &&
             !is_punct(static_cast<unsigned char>(text[i]))) {
        ++i;
      }
      tokens.push_back({std::string(text.substr(b, i - b)), b, i});
    }
  }
  return tokens;
}

const Tokenizer& default_tokenizer() {
  static const WordTokenizer tokenizer;
  return tokenizer;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

bool is_sentence_end(std::string_view token) { return token == "." || token == "!" || token == "?"; }

void validate(const ChunkSpec& spec) {
  if (spec.size_tokens < 1) throw Error(ErrorCode::InvalidChunkSpec, "chunk size must be >= 1");
  if (spec.overlap_tokens >= spec.size_tokens) {
    throw Error(ErrorCode::InvalidChunkSpec, "overlap " + std::to_string(spec.overlap_tokens) +
                                                 " must be smaller than chunk size " +
                                                 std::to_string(spec.size_tokens));
  }
}

std::vector<Chunk> split_into_chunks(const Document& document, const ChunkSpec& spec,
                                     const Tokenizer& tokenizer) {
  validate(spec);
  const auto tokens = tokenizer.tokenize_spans(document.text);
  const std::size_t n = tokens.size();
  std::vector<Chunk> chunks;
  if (n == 0) return chunks;

  const std::size_t max_backoff = spec.size_tokens / 10;
  std::size_t start = 0;
  while (true) {
    std::size_t end = std::min(start + spec.size_tokens, n);
    if (spec.sentence_snap && end < n) {
      // Search [end - max_backoff, end] for the last sentence end, keeping
      // stride positive so the loop always advances.
      for (std::size_t cut = end; cut + max_backoff >= end && cut > start; --cut) {
        if (is_sentence_end(tokens[cut - 1].text)) {
          if (cut > start + spec.overlap_tokens) end = cut;
          break;
        }
      }
    }
    Chunk c;
    c.doc_id = document.doc_id;
    c.seq = chunks.size();
    c.chunk_id = document.doc_id + "#" + std::to_string(c.seq);
    c.start_token = start;
    c.token_count = end - start;
    c.text = document.text.substr(tokens[start].begin, tokens[end - 1].end - tokens[start].begin);
    c.metadata = document.metadata;
    c.metadata["seq"] = std::to_string(c.seq);
    chunks.push_back(std::move(c));
    if (end == n) break;
    start = end - spec.overlap_tokens;
  }
  return chunks;
}

const Document& CorpusStore::ingest_document(std::string doc_id, std::string text, Metadata metadata) {
  if (doc_id.empty()) throw Error(ErrorCode::InvalidArgument, "doc_id must be non-empty");
  if (text.empty()) throw Error(ErrorCode::EmptyDocument, "document '" + doc_id + "' has no text");
  if (docs_.count(doc_id)) throw Error(ErrorCode::DuplicateDocument, "document '" + doc_id + "' already ingested");
  auto key = doc_id;
  auto [it, _] = docs_.emplace(std::move(key), Document{std::move(doc_id), std::move(text), std::move(metadata)});
  return it->second;
}

const Document& CorpusStore::get(std::string_view doc_id) const {
  auto it = docs_.find(doc_id);
  if (it == docs_.end()) throw Error(ErrorCode::NotFound, "no document '" + std::string(doc_id) + "'");
  return it->second;
}

bool CorpusStore::contains(std::string_view doc_id) const { return docs_.find(doc_id) != docs_.end(); }

std::vector<const Document*> CorpusStore::documents() const {
  std::vector<const Document*> out;
  out.reserve(docs_.size());
  for (const auto& [_, d] : docs_) out.push_back(&d);
  return out;
}

namespace {

Json metadata_json(const Metadata& m) {
  Json j = Json::object();
  for (const auto& [k, v] : m) j[k] = v;
  return j;
}

Metadata parse_metadata(const Json& record, std::size_t line) {
  Metadata m;
  auto it = record.find("metadata");
  if (it == record.end() || it->is_null()) return m;
  if (!it->is_object()) throw Error(ErrorCode::ParseError, "metadata must be an object", Stage::None, line);
  for (const auto& [k, v] : it->items()) {
    m[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return m;
}

}  // namespace

void CorpusStore::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& [id, d] : docs_) {
    Json j{{"doc_id", d.doc_id}, {"text", d.text}, {"metadata", metadata_json(d.metadata)}};
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

CorpusStore CorpusStore::load(const std::filesystem::path& path) {
  CorpusStore store;
  read_jsonl(path, [&](const Json& rec, std::size_t line) {
    try {
      store.ingest_document(require_string(rec, "doc_id", line), require_string(rec, "text", line),
                            parse_metadata(rec, line));
    } catch (const Error& e) {
      if (e.line()) throw;
      throw Error(e.code(), e.message(), Stage::None, line);
    }
  });
  return store;
}

ImportResult import_path(CorpusStore& store, const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  ImportResult result;
  auto add = [&](const std::string& source, auto&& fn) {
    try {
      fn();
      ++result.documents;
    } catch (const Error& e) {
      result.failures.push_back({source, e.what()});
    }
  };

  std::error_code ec;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      add(f.string(), [&] { store.ingest_document(f.stem().string(), read_file(f)); });
    }
    return result;
  }
  if (!fs::exists(path, ec)) {
    result.failures.push_back({path.string(), "IoError: no such file or directory"});
    return result;
  }
  if (path.extension() == ".jsonl") {
    try {
      read_jsonl(path, [&](const Json& rec, std::size_t line) {
        std::string source = path.string() + ":" + std::to_string(line);
        add(source, [&] {
          store.ingest_document(require_string(rec, "doc_id", line), require_string(rec, "text", line),
                                parse_metadata(rec, line));
        });
      });
    } catch (const Error& e) {
      result.failures.push_back({path.string(), e.what()});
    }
    return result;
  }
  add(path.string(), [&] { store.ingest_document(path.stem().string(), read_file(path)); });
  return result;
}

std::vector<Chunk> chunk_corpus(const CorpusStore& store, const ChunkSpec& spec, const Tokenizer& tokenizer) {
  std::vector<Chunk> all;
  for (const Document* d : store.documents()) {
    auto chunks = split_into_chunks(*d, spec, tokenizer);
    std::move(chunks.begin(), chunks.end(), std::back_inserter(all));
  }
  return all;
}

void save_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& path) {
  std::string out;
  for (const auto& c : chunks) {
    Json j{{"chunk_id", c.chunk_id},     {"doc_id", c.doc_id},           {"seq", c.seq},
           {"start_token", c.start_token}, {"token_count", c.token_count}, {"text", c.text},
           {"metadata", metadata_json(c.metadata)}};
    out += j.dump() + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<Chunk> load_chunks(const std::filesystem::path& path) {
  std::vector<Chunk> chunks;
  read_jsonl(path, [&](const Json& rec, std::size_t line) {
    Chunk c;
    c.chunk_id = require_string(rec, "chunk_id", line);
    c.doc_id = require_string(rec, "doc_id", line);
    c.seq = static_cast<std::size_t>(require_int(rec, "seq", line));
    c.start_token = static_cast<std::size_t>(require_int(rec, "start_token", line));
    c.token_count = static_cast<std::size_t>(require_int(rec, "token_count", line));
    c.text = require_string(rec, "text", line);
    c.metadata = parse_metadata(rec, line);
    chunks.push_back(std::move(c));
  });
  return chunks;
}

}  // namespace finrag
