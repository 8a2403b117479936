#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace wukong {

enum class Modality { Text, Image };

const char* modality_name(Modality m) noexcept;
Modality parse_modality(std::string_view s);

/// Content-addressed blob reference. `hash` is "sha256:<hex>"; `locator` is
/// where the bytes live on disk and is not part of document identity.
struct BlobRef {
  std::string hash;
  std::filesystem::path locator;
};

struct TextChunk {
  std::string chunk_id;
  std::size_t order_index = 0;
  std::vector<std::string> section_path;
  std::string text;
};

struct ImageChunk {
  std::string chunk_id;
  std::size_t order_index = 0;
  std::string caption;
  std::optional<std::string> figure_label;
  BlobRef image_ref;
};

using Chunk = std::variant<TextChunk, ImageChunk>;

const std::string& chunk_id(const Chunk& c) noexcept;
std::size_t order_index(const Chunk& c) noexcept;
Modality modality(const Chunk& c) noexcept;

/// Reading-ordered interleaved document. Immutable after construction; the
/// constructor sorts chunks by order_index and enforces every invariant
/// (non-empty, gap-free order, unique ids, non-blank text).
class ParsedDocument {
 public:
  ParsedDocument(std::string doc_id, std::string source_name, std::vector<Chunk> chunks);

  const std::string& doc_id() const noexcept { return doc_id_; }
  const std::string& source_name() const noexcept { return source_name_; }
  const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
  std::size_t size() const noexcept { return chunks_.size(); }
  std::size_t n_text() const noexcept { return n_text_; }
  std::size_t m_image() const noexcept { return m_image_; }

  /// nullptr when the id is unknown.
  const Chunk* find(std::string_view chunk_id) const;

  /// Section membership used by the Section strategy. Text chunks use their
  /// own path; an image inherits the path of the nearest preceding text chunk
  /// (or the nearest following one when it opens the document).
  const std::vector<std::string>& effective_section(std::size_t order) const;

  friend bool operator==(const ParsedDocument& a, const ParsedDocument& b);

 private:
  std::string doc_id_;
  std::string source_name_;
  std::vector<Chunk> chunks_;
  std::size_t n_text_ = 0;
  std::size_t m_image_ = 0;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> section_owner_;
};

/// Directory of blobs named by the hex part of their sha256 address.
class BlobStore {
 public:
  explicit BlobStore(std::filesystem::path dir);

  const std::filesystem::path& dir() const noexcept { return dir_; }
  /// Stores bytes and returns their "sha256:<hex>" address. Idempotent.
  BlobRef put(std::string_view bytes) const;
  bool contains(std::string_view hash) const;
  std::filesystem::path locate(std::string_view hash) const;
  /// Reads and verifies a blob. MissingBlobError / IntegrityError.
  std::string read(std::string_view hash) const;

 private:
  std::filesystem::path dir_;
};

/// Maps a blob hash to its on-disk location; throws MissingBlobError when
/// the blob cannot be found or IntegrityError when its bytes do not match.
using BlobResolver = std::function<std::filesystem::path(const std::string& hash)>;

BlobResolver verifying_resolver(const BlobStore& store);

/// Reads the canonical interleaved format. Errors: ParseError (with
/// line/column), IntegrityError, MissingBlobError.
ParsedDocument parse_interleaved(std::string_view serialized, const BlobResolver& resolve);

/// Canonical form: fixed attribute order, LF line endings, two-space indent.
std::string serialize_document(const ParsedDocument& doc);

/// Loads `<dir>/document.xml`-style files; blobs resolve under `blobs/`
/// beside the file.
ParsedDocument load_document(const std::filesystem::path& file);

/// Writes the document and copies its blobs into `blobs/` beside the file.
void save_document(const ParsedDocument& doc, const std::filesystem::path& file);

std::string encode_section_path(const std::vector<std::string>& path);
std::vector<std::string> decode_section_path(std::string_view encoded);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// --- external parsers --------------------------------------------------

struct ExternalParserConfig {
  /// Shell command template. "{pdf}" is replaced by the quoted input path and
  /// "{out}" by a quoted scratch directory the tool may write assets into.
  /// The parser's document must be written to standard output.
  std::string command;
  /// Where extracted figure blobs are stored.
  std::filesystem::path blob_dir;
};

/// Runs the configured parser and converts its output (TEI XML or the JSON
/// block dialect) into an interleaved document.
ParsedDocument external_parse(const std::filesystem::path& pdf, const ExternalParserConfig& config);

/// Converts one parser output. Relative graphic paths are looked up in
/// `asset_dirs` in order.
/// Paragraphs become text chunks; figures and tables become image chunks
/// with their caption attached. ConversionError on unmappable output.
ParsedDocument convert_parser_output(std::string_view output,
                                     const std::vector<std::filesystem::path>& asset_dirs,
                                     const BlobStore& blobs, const std::string& doc_id,
                                     const std::string& source_name);

}  // namespace wukong
