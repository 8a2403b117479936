#include <gtest/gtest.h>

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "wukong/embedding.hpp"
#include "wukong/errors.hpp"
#include "wukong/hash.hpp"

using namespace wukong;
using wukong::fixtures::TempDir;

namespace {

class CountingProvider final : public EmbeddingProvider {
 public:
  explicit CountingProvider(std::size_t dims = 8) : inner_(OfflineEmbedder::Options{1, dims}) {}
  std::string provider_id() const override { return "counting"; }
  std::size_t dims() const override { return inner_.dims(); }
  std::vector<float> embed(const EmbeddingInput& input) override {
    ++calls;
    return inner_.embed(input);
  }
  std::size_t calls = 0;

 private:
  OfflineEmbedder inner_;
};

EmbeddingVector unit(std::vector<double> v) { return EmbeddingVector::normalized(v); }

EmbeddingRecord random_record(std::mt19937_64& rng, std::size_t dims) {
  std::normal_distribution<double> g;
  std::vector<double> v(dims);
  for (auto& x : v) x = g(rng);
  const auto n = rng();
  return EmbeddingRecord{"c" + std::to_string(n % 997), n % 3 == 0 ? Modality::Image : Modality::Text,
                         content_address(std::to_string(n)), n % 2 == 0 ? "prov-a" : "prov-b",
                         EmbeddingVector::normalized(v)};
}

}  // namespace

TEST(Embedding, OfflineIsDeterministicAndUnit) {
  OfflineEmbedder e(7, 64);
  const auto a = embed_text(e, "abc");
  const auto b = embed_text(e, "abc");
  EXPECT_EQ(a, b);
  EXPECT_NEAR(l2_norm(a), 1.0, 1e-6);
  EXPECT_EQ(OfflineEmbedder(7, 16).embed({Modality::Text, "abc", ""}).size(), 16u);
  EXPECT_NE(OfflineEmbedder(7, 64).provider_id(), OfflineEmbedder(8, 64).provider_id());
}

TEST(Embedding, DistinctStringsAreNotNearDuplicates) {
  std::mt19937_64 rng(5);
  std::size_t close = 0;
  const int pairs = 10000;
  for (int i = 0; i < pairs; ++i) {
    OfflineEmbedder e(rng(), 64);
    const auto a = embed_text(e, "string-" + std::to_string(rng()));
    const auto b = embed_text(e, "string-" + std::to_string(rng()));
    if (cosine_similarity(a, b) >= 0.99) ++close;
  }
  EXPECT_LE(static_cast<double>(close) / pairs, 0.001);
}

TEST(Embedding, PlantedTopics) {
  OfflineEmbedder e(OfflineEmbedder::Options{3, 512, true});
  std::mt19937_64 rng(9);
  double min_shared = 1.0;
  double max_disjoint = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto t1 = "t" + std::to_string(rng() % 100000);
    const auto t2 = "u" + std::to_string(rng() % 100000);
    const auto a = embed_text(e, "topic:" + t1 + " " + fixtures::random_words(rng, 12));
    const auto b = embed_text(e, "topic:" + t1 + " " + fixtures::random_words(rng, 12));
    const auto c = embed_text(e, "topic:" + t2 + " " + fixtures::random_words(rng, 12));
    min_shared = std::min(min_shared, cosine_similarity(a, b));
    max_disjoint = std::max(max_disjoint, std::abs(cosine_similarity(a, c)));
  }
  EXPECT_GE(min_shared, 0.8);
  EXPECT_LE(max_disjoint, 0.2);
}

TEST(Embedding, CosineBasics) {
  EXPECT_DOUBLE_EQ(cosine_similarity(unit({1, 0}), unit({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(unit({1, 0}), unit({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity(unit({1, 0}), unit({-1, 0})), -1.0);
  EXPECT_THROW(cosine_similarity(unit({1, 0}), unit({1, 0, 0})), DimsError);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_record(rng, 33).vector;
    const auto b = random_record(rng, 33).vector;
    const double ab = cosine_similarity(a, b);
    EXPECT_EQ(ab, cosine_similarity(b, a));
    EXPECT_LE(std::abs(ab), 1.0);
  }
}

TEST(Embedding, NormalizeRejectsZero) {
  EXPECT_THROW(EmbeddingVector::normalized(std::vector<double>{0, 0}), DomainError);
  EXPECT_THROW(EmbeddingVector::normalized(std::vector<double>{NAN, 1}), DomainError);
}

TEST(Embedding, ImageEmbedding) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  OfflineEmbedder e(1, 32);
  const auto ref = blobs.put(fixtures::fake_image("x"));
  const BlobRef located{ref.hash, blobs.locate(ref.hash)};
  EXPECT_EQ(embed_image(e, located, "cap"), embed_image(e, located, "cap"));
  EXPECT_NE(embed_image(e, located, "cap"), embed_image(e, located, "other cap"));
  EXPECT_NE(image_content_hash(ref.hash, "cap"), image_content_hash(ref.hash, "other cap"));
  EXPECT_THROW(embed_image(e, BlobRef{content_address("absent"), dir / "nope"}, "c"), MissingBlobError);
}

TEST(Embedding, ProviderContract) {
  class Wrong final : public EmbeddingProvider {
   public:
    std::string provider_id() const override { return "wrong"; }
    std::size_t dims() const override { return 4; }
    std::vector<float> embed(const EmbeddingInput&) override { return {1, 2, 3}; }
  } wrong;
  EXPECT_THROW(embed_text(wrong, "hello"), ProviderContractError);
  OfflineEmbedder e(1, 4);
  EXPECT_THROW(embed_text(e, "   "), DomainError);
}

TEST(EmbeddingCache, MapLaws) {
  EmbeddingCache cache;
  EXPECT_FALSE(cache.get("p", "h"));
  std::mt19937_64 rng(3);
  auto r = random_record(rng, 8);
  cache.put(r);
  EXPECT_EQ(*cache.get(r.provider_id, r.content_hash), r);
  EXPECT_EQ(cache.dims(), 8u);
  EXPECT_THROW(cache.put(random_record(rng, 9)), DimsError);
  auto bad = r;
  bad.vector.values[0] += 0.5f;
  EXPECT_THROW(cache.put(bad), DomainError);
}

TEST(EmbeddingCache, PersistLoadTenThousand) {
  TempDir dir;
  EmbeddingCache cache;
  std::mt19937_64 rng(17);
  std::vector<EmbeddingRecord> expected;
  for (int i = 0; i < 10000; ++i) {
    auto r = random_record(rng, 24);
    r.content_hash = content_address("rec" + std::to_string(i));
    expected.push_back(r);
    cache.put(r);
  }
  cache.persist(dir / "c.wkec");
  const auto loaded = EmbeddingCache::load(dir / "c.wkec");
  auto got = loaded.records();
  auto want = cache.records();
  ASSERT_EQ(got.size(), 10000u);
  EXPECT_EQ(got, want);
  for (const auto& r : expected) EXPECT_NEAR(l2_norm(loaded.find(r.provider_id, r.content_hash)->vector), 1.0, 1e-6);
}

TEST(EmbeddingCache, FileLayout) {
  EmbeddingCache cache;
  cache.put(EmbeddingRecord{"t0", Modality::Text, "h", "p", unit({1, 0})});
  const auto bytes = cache.encode();
  ASSERT_GE(bytes.size(), 14u);
  EXPECT_EQ(bytes.substr(0, 4), "WKEC");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), EmbeddingCache::kFormatVersion);
  EXPECT_EQ(static_cast<unsigned char>(bytes[6]), 1u);
  EXPECT_EQ(EmbeddingCache::decode(bytes).records(), cache.records());

  EXPECT_THROW(EmbeddingCache::decode("XXXX" + bytes.substr(4)), CacheFormatError);
  auto versioned = bytes;
  versioned[4] = 9;
  EXPECT_THROW(EmbeddingCache::decode(versioned), CacheVersionError);
  EXPECT_THROW(EmbeddingCache::decode(bytes.substr(0, bytes.size() - 3)), CacheFormatError);
  EXPECT_THROW(EmbeddingCache::decode(bytes + "x"), CacheFormatError);
}

TEST(EmbeddingCache, PerProviderPersist) {
  TempDir dir;
  EmbeddingCache cache;
  cache.put(EmbeddingRecord{"t0", Modality::Text, "h1", "a", unit({1, 0})});
  cache.put(EmbeddingRecord{"t1", Modality::Text, "h2", "b", unit({0, 1})});
  cache.persist(dir / "a.wkec", "a");
  EXPECT_EQ(EmbeddingCache::load(dir / "a.wkec").size(), 1u);
}

TEST(EmbeddingCache, CacheThroughCallsProviderOnce) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  const auto doc = fixtures::sample_paper(blobs);
  CountingProvider text;
  CountingProvider image;
  EmbeddingCache cache;
  for (int round = 0; round < 3; ++round) {
    for (const auto& c : doc.chunks()) embed_chunk_cached(cache, text, image, c);
  }
  EXPECT_EQ(text.calls, doc.n_text());
  EXPECT_EQ(image.calls, doc.m_image());
  for (const auto& r : cache.records()) EXPECT_TRUE(is_unit(r.vector));
}

TEST(HttpProvider, RoundTripAndErrors) {
  httplib::Server server;
  std::string last_body;
  std::string last_auth;
  int mode = 0;
  server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    last_body = req.body;
    last_auth = req.get_header_value("Authorization");
    if (mode == 1) {
      res.status = 503;
      return;
    }
    if (mode == 2) {
      res.set_content(R"({"dims":3,"values":[1,2]})", "application/json");
      return;
    }
    res.set_content(R"({"dims":3,"values":[3,0,4]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpEmbeddingProvider p(
      HttpEmbeddingProvider::Options{"http://127.0.0.1:" + std::to_string(port), "secret", "remote-v1", 3});
  const auto v = embed_text(p, "hello");
  EXPECT_NEAR(v.values[0], 0.6, 1e-6);
  const auto body = nlohmann::json::parse(last_body);
  EXPECT_EQ(body["modality"], "text");
  EXPECT_EQ(body["content"], "hello");
  EXPECT_EQ(last_auth, "Bearer secret");

  mode = 1;
  try {
    embed_text(p, "x");
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_TRUE(e.retryable());
  }
  mode = 2;
  EXPECT_THROW(embed_text(p, "x"), ProviderContractError);
  server.stop();
  t.join();

  EXPECT_EQ(nlohmann::json::parse(HttpEmbeddingProvider::request_body({Modality::Image, "\x01\x02", "cap"}))["content"],
            base64_encode("\x01\x02"));
}
