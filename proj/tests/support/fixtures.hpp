#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "wukong/doc_model.hpp"

namespace wukong::fixtures {

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path data_dir();

/// Deterministic fake image bytes.
std::string fake_image(const std::string& tag);

TextChunk text_chunk(std::string id, std::size_t order, std::vector<std::string> section, std::string text);
ImageChunk image_chunk(const BlobStore& blobs, std::string id, std::size_t order, std::string caption,
                       std::optional<std::string> label);

/// A short paper: three sections, five paragraphs citing two figures and a
/// table, and the three image chunks.
ParsedDocument sample_paper(const BlobStore& blobs, const std::string& doc_id = "paper-1");

/// Like sample_paper, plus paragraphs that share the planted token
/// "topic:sparsity" at reading-order distance >= 2, so CrossParagraph is
/// satisfiable under the planted offline embedder.
ParsedDocument related_paper(const BlobStore& blobs, const std::string& doc_id = "paper-2");

/// Random UTF-8 drawn from a pool of markup-hostile and multi-byte characters.
std::string random_unicode(std::mt19937_64& rng, std::size_t n);
/// Shuffled chunk list of random text and image chunks.
ParsedDocument random_document(const BlobStore& blobs, std::mt19937_64& rng, std::size_t n);

std::string random_words(std::mt19937_64& rng, std::size_t n);

/// n chunks of length-uniform text with an image every `image_every` chunks
/// (0 for none).
ParsedDocument synthetic_document(const BlobStore& blobs, const std::string& doc_id, std::size_t n,
                                  std::uint64_t seed, std::size_t words = 40, std::size_t image_every = 5);

/// One text chunk per topic carrying the token "topic:<name>", with filler
/// chunks between them. The planted chunk for topic i has id "p<i>".
ParsedDocument planted_document(const BlobStore& blobs, const std::string& doc_id,
                                const std::vector<std::string>& topics, std::uint64_t seed);

}  // namespace wukong::fixtures
