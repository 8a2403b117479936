#include "fixtures.hpp"

#include <atomic>

#include "wukong/hash.hpp"
#include "wukong/text.hpp"

namespace wukong::fixtures {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("wukong-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path data_dir() { return WUKONG_TEST_DATA; }

std::string fake_image(const std::string& tag) {
  std::string bytes = "\x89PNG\r\n\x1a\n";
  bytes += sha256_hex(tag);
  bytes += tag;
  return bytes;
}

TextChunk text_chunk(std::string id, std::size_t order, std::vector<std::string> section, std::string text) {
  return TextChunk{std::move(id), order, std::move(section), std::move(text)};
}

ImageChunk image_chunk(const BlobStore& blobs, std::string id, std::size_t order, std::string caption,
                       std::optional<std::string> label) {
  auto ref = blobs.put(fake_image(id + caption));
  return ImageChunk{std::move(id), order, std::move(caption), std::move(label), std::move(ref)};
}

ParsedDocument sample_paper(const BlobStore& blobs, const std::string& doc_id) {
  std::vector<Chunk> c;
  std::size_t o = 0;
  c.push_back(text_chunk("t0", o++, {"Introduction"},
                         "Reading long scientific papers is slow, so we study question answering over them."));
  c.push_back(text_chunk("t1", o++, {"Introduction"},
                         "Figure 1 gives an overview of the pipeline from parsing to answer generation."));
  c.push_back(image_chunk(blobs, "i0", o++, "Overview of the pipeline.", "Figure 1"));
  c.push_back(text_chunk("t2", o++, {"Method"},
                         "Each paragraph and figure is embedded once and cached for later queries."));
  c.push_back(text_chunk("t3", o++, {"Method", "Sampler"},
                         "The sampler keeps the five chunks most similar to the question, see Fig. 2."));
  c.push_back(image_chunk(blobs, "i1", o++, "Similarity scores for one query.", "Figure 2"));
  c.push_back(text_chunk("t4", o++, {"Results"},
                         "Table 1 reports accuracy and token counts for every system we compared."));
  c.push_back(image_chunk(blobs, "i2", o++, "Accuracy and tokens per system.", "Table 1"));
  c.push_back(text_chunk("t5", o++, {"Results"},
                         "Sparse sampling reduces prompt tokens while accuracy stays comparable."));
  return ParsedDocument(doc_id, doc_id + ".pdf", std::move(c));
}

ParsedDocument related_paper(const BlobStore& blobs, const std::string& doc_id) {
  std::vector<Chunk> c;
  std::size_t o = 0;
  c.push_back(text_chunk("t0", o++, {"Introduction"},
                         "topic:sparsity Answering questions over long papers needs only a few relevant passages."));
  c.push_back(text_chunk("t1", o++, {"Introduction"}, "We release a dataset and a model for this task."));
  c.push_back(text_chunk("t2", o++, {"Approach"}, "Figure 1 sketches how chunks flow into the sampler."));
  c.push_back(image_chunk(blobs, "i0", o++, "Chunk flow into the sampler.", "Figure 1"));
  c.push_back(text_chunk("t3", o++, {"Approach"},
                         "topic:sparsity Keeping few passages lowers the prompt cost of every question."));
  c.push_back(text_chunk("t4", o++, {"Approach", "Training"}, "The text encoder is trained with a contrastive loss."));
  c.push_back(text_chunk("t5", o++, {"Experiments"}, "Table 2 lists the scores, and Fig. 1 repeats the layout."));
  c.push_back(image_chunk(blobs, "i1", o++, "Scores of all systems.", "Table 2"));
  c.push_back(text_chunk("t6", o++, {"Experiments"},
                         "topic:sparsity Accuracy holds steady as the documents grow longer."));
  return ParsedDocument(doc_id, doc_id + ".pdf", std::move(c));
}

std::string random_unicode(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<char32_t> pool{U'a', U'Z', U'7', U' ', U'&', U'<', U'>', U'"', U'\'', U'é',
                                          U'́', U'中', U'文', U'あ', U'א', U'\U0001F600',
                                          U' ', U'.', U'|', U'\\'};
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::u32string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(pool[pick(rng)]);
  return text::encode_utf8(s);
}

ParsedDocument random_document(const BlobStore& blobs, std::mt19937_64& rng, std::size_t n) {
  std::vector<Chunk> chunks;
  std::bernoulli_distribution image(0.25);
  std::uniform_int_distribution<std::size_t> len(1, 40);
  for (std::size_t i = 0; i < n; ++i) {
    const auto id = "c" + std::to_string(i);
    if (image(rng)) {
      std::optional<std::string> label;
      if (rng() % 2 == 0) label = "Figure " + std::to_string(i);
      auto ref = blobs.put(fake_image(id + std::to_string(rng())));
      chunks.push_back(ImageChunk{id, i, random_unicode(rng, len(rng) - 1), label, ref});
    } else {
      std::vector<std::string> section;
      for (std::size_t d = rng() % 3; d > 0; --d) section.push_back(random_unicode(rng, len(rng) % 8 + 1));
      auto body = "x" + random_unicode(rng, len(rng)) + "y";
      chunks.push_back(TextChunk{id, i, section, body});
    }
  }
  std::shuffle(chunks.begin(), chunks.end(), rng);
  return ParsedDocument("doc-" + std::to_string(rng() % 1000), "random.pdf", std::move(chunks));
}

std::string random_words(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::string> vocab{
      "model", "paper", "figure", "table", "result", "method", "data", "layer", "token", "query", "score",
      "vector", "image", "caption", "section", "answer", "question", "sample", "train", "test", "loss",
      "accuracy", "baseline", "length", "document", "encoder", "decoder", "attention", "retrieval", "evidence"};
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) out += ' ';
    out += vocab[pick(rng)];
  }
  return out;
}

ParsedDocument synthetic_document(const BlobStore& blobs, const std::string& doc_id, std::size_t n,
                                  std::uint64_t seed, std::size_t words, std::size_t image_every) {
  std::mt19937_64 rng(seed);
  std::vector<Chunk> c;
  for (std::size_t i = 0; i < n; ++i) {
    const auto section = std::vector<std::string>{"Section " + std::to_string(i / 10 + 1)};
    if (image_every > 0 && i % image_every == image_every - 1) {
      c.push_back(image_chunk(blobs, "c" + std::to_string(i), i, random_words(rng, 8),
                              "Figure " + std::to_string(i / image_every + 1)));
    } else {
      c.push_back(text_chunk("c" + std::to_string(i), i, section, random_words(rng, words)));
    }
  }
  return ParsedDocument(doc_id, doc_id + ".pdf", std::move(c));
}

ParsedDocument planted_document(const BlobStore& blobs, const std::string& doc_id,
                                const std::vector<std::string>& topics, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Chunk> c;
  std::size_t o = 0;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    c.push_back(text_chunk("f" + std::to_string(i), o++, {"Background"}, random_words(rng, 30)));
    c.push_back(text_chunk("p" + std::to_string(i), o++, {"Findings"},
                           "topic:" + topics[i] + " The " + topics[i] + " result is described here."));
    if (i % 3 == 2) {
      c.push_back(image_chunk(blobs, "g" + std::to_string(i), o++, random_words(rng, 6),
                              "Figure " + std::to_string(i / 3 + 1)));
    }
  }
  return ParsedDocument(doc_id, doc_id + ".pdf", std::move(c));
}

}  // namespace wukong::fixtures
