#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace finrag {

using Metadata = std::map<std::string, std::string>;

// A token together with its byte span in the source text. Spans let a chunk
// be cut from the original text instead of re-joining tokens.
struct Token {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<Token> tokenize_spans(std::string_view text) const = 0;
  virtual std::string name() const = 0;

  std::vector<std::string> tokenize(std::string_view text) const;
};

// Splits on whitespace; every ASCII punctuation character is a token of its
// own. Bytes >= 0x80 are word characters, so UTF-8 sequences stay intact.
class WordTokenizer final : public Tokenizer {
 public:
  std::vector<Token> tokenize_spans(std::string_view text) const override;
  std::string name() const override { return "word-punct-v1"; }
};

const Tokenizer& default_tokenizer();

// Inverse of tokenize up to whitespace normalization.
std::string join_tokens(const std::vector<std::string>& tokens);

bool is_sentence_end(std::string_view token);

struct Document {
  std::string doc_id;
  std::string text;
  Metadata metadata;
};

struct Chunk {
  std::string chunk_id;  // "{doc_id}#{seq}"
  std::string doc_id;
  std::size_t seq = 0;
  std::string text;
  std::size_t token_count = 0;
  std::size_t start_token = 0;  // offset of the first token within the document
  Metadata metadata;            // document metadata plus "seq"
};

struct ChunkSpec {
  std::size_t size_tokens = 1024;
  std::size_t overlap_tokens = 0;
  // Back a chunk's end up to the nearest sentence-ending token, moving at
  // most 10% of size_tokens. The final chunk is never snapped.
  bool sentence_snap = false;
};

void validate(const ChunkSpec& spec);

std::vector<Chunk> split_into_chunks(const Document& document, const ChunkSpec& spec,
                                     const Tokenizer& tokenizer = default_tokenizer());

// Document store. Single writer during ingestion; concurrent reads are safe
// once ingestion has finished.
class CorpusStore {
 public:
  const Document& ingest_document(std::string doc_id, std::string text, Metadata metadata = {});

  const Document& get(std::string_view doc_id) const;
  bool contains(std::string_view doc_id) const;
  std::size_t size() const noexcept { return docs_.size(); }

  // Documents in doc_id order.
  std::vector<const Document*> documents() const;

  // One JSON record per line: {doc_id, text, metadata}.
  void save(const std::filesystem::path& path) const;
  static CorpusStore load(const std::filesystem::path& path);

 private:
  std::map<std::string, Document, std::less<>> docs_;
};

// Importers. A directory contributes one document per regular file (doc_id =
// filename stem, sorted by name); a record file holds {doc_id, text,
// metadata?} lines. Per-file failures are collected, not thrown.
struct ImportFailure {
  std::string source;
  std::string message;
};

struct ImportResult {
  std::size_t documents = 0;
  std::vector<ImportFailure> failures;
};

ImportResult import_path(CorpusStore& store, const std::filesystem::path& path);

std::vector<Chunk> chunk_corpus(const CorpusStore& store, const ChunkSpec& spec,
                                const Tokenizer& tokenizer = default_tokenizer());

void save_chunks(const std::vector<Chunk>& chunks, const std::filesystem::path& path);
std::vector<Chunk> load_chunks(const std::filesystem::path& path);

}  // namespace finrag
