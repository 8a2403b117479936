#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "wukong/errors.hpp"
#include "wukong/hash.hpp"
#include "wukong/text.hpp"

using namespace wukong;
using wukong::fixtures::TempDir;

namespace {

BlobResolver resolver_for(const BlobStore& store) { return verifying_resolver(store); }

}  // namespace

TEST(DocModel, CountsAndOrder) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  const std::string xml =
      "<document id=\"d\" source=\"d.pdf\">\n"
      "  <text id=\"t0\" order=\"0\">First.</text>\n"
      "  <image id=\"i0\" order=\"1\" hash=\"" +
      blobs.put("img").hash +
      "\">Cap</image>\n"
      "  <text id=\"t1\" order=\"2\">Second.</text>\n"
      "</document>\n";
  const auto doc = parse_interleaved(xml, resolver_for(blobs));
  EXPECT_EQ(doc.n_text(), 2u);
  EXPECT_EQ(doc.m_image(), 1u);
  for (std::size_t i = 0; i < doc.size(); ++i) EXPECT_EQ(order_index(doc.chunks()[i]), i);
  EXPECT_EQ(serialize_document(doc), xml);
}

TEST(DocModel, EmptyDocumentIsParseError) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  EXPECT_THROW(parse_interleaved("<document id=\"d\" source=\"s\"></document>", resolver_for(blobs)), ParseError);
}

TEST(DocModel, MalformedMarkupReportsPosition) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  try {
    parse_interleaved("<document id=\"d\" source=\"s\">\n  <text id=\"t0\" order=\"0\">x</txet>\n</document>",
                      resolver_for(blobs));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(DocModel, InvariantViolations) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  using fixtures::text_chunk;
  EXPECT_THROW(ParsedDocument("d", "s", {text_chunk("a", 0, {}, "x"), text_chunk("b", 2, {}, "y")}), IntegrityError);
  EXPECT_THROW(ParsedDocument("d", "s", {text_chunk("a", 0, {}, "x"), text_chunk("a", 1, {}, "y")}), IntegrityError);
  EXPECT_THROW(ParsedDocument("d", "s", {text_chunk("a", 0, {}, "  \n ")}), IntegrityError);
  EXPECT_THROW(ParsedDocument("d", "s", {}), IntegrityError);
}

TEST(DocModel, MissingAndCorruptBlobs) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  const auto hash = content_address("never stored");
  const std::string xml = "<document id=\"d\" source=\"s\">\n  <image id=\"i0\" order=\"0\" hash=\"" + hash +
                          "\">c</image>\n</document>\n";
  EXPECT_THROW(parse_interleaved(xml, resolver_for(blobs)), MissingBlobError);

  const auto ref = blobs.put("original");
  write_file_atomic(blobs.locate(ref.hash), "tampered");
  EXPECT_THROW(blobs.read(ref.hash), IntegrityError);
}

TEST(DocModel, ContentAddressing) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  EXPECT_EQ(blobs.put("same bytes").hash, blobs.put("same bytes").hash);
  EXPECT_NE(blobs.put("same bytes").hash, blobs.put("other bytes").hash);
}

TEST(DocModel, RoundTripFiftyChunkFixture) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  const auto doc = fixtures::synthetic_document(blobs, "fifty", 50, 3);
  const auto xml = serialize_document(doc);
  const auto back = parse_interleaved(xml, resolver_for(blobs));
  EXPECT_EQ(back, doc);
  EXPECT_EQ(serialize_document(back), xml);
}

TEST(DocModel, RandomUnicodeRoundTrip) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto doc = fixtures::random_document(blobs, rng, 1 + rng() % 30);
    const auto xml = serialize_document(doc);
    const auto back = parse_interleaved(xml, resolver_for(blobs));
    ASSERT_EQ(back, doc) << xml;
    ASSERT_EQ(serialize_document(back), xml);
    for (std::size_t i = 0; i < doc.size(); ++i) {
      if (const auto* t = std::get_if<TextChunk>(&doc.chunks()[i])) {
        ASSERT_EQ(std::get<TextChunk>(back.chunks()[i]).text, t->text);
      }
    }
  }
}

TEST(DocModel, CanonicalizesAttributeOrderAndNewlines) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  const std::string messy =
      "<?xml version=\"1.0\"?>\r\n<document source=\"s.pdf\" id=\"d\">\r\n"
      "<text order=\"1\" id=\"b\">second</text><text section=\"Intro\" order=\"0\" id=\"a\">first</text>\r\n"
      "</document>";
  const auto doc = parse_interleaved(messy, resolver_for(blobs));
  const auto canonical = serialize_document(doc);
  EXPECT_EQ(canonical,
            "<document id=\"d\" source=\"s.pdf\">\n"
            "  <text id=\"a\" order=\"0\" section=\"Intro\">first</text>\n"
            "  <text id=\"b\" order=\"1\">second</text>\n"
            "</document>\n");
  EXPECT_EQ(serialize_document(parse_interleaved(canonical, resolver_for(blobs))), canonical);
}

TEST(DocModel, SectionPathEncoding) {
  const std::vector<std::vector<std::string>> paths{
      {}, {"Intro"}, {"A", "B"}, {"with|pipe", "back\\slash"}, {"", "empty first"}};
  for (const auto& p : paths) EXPECT_EQ(decode_section_path(encode_section_path(p)), p);
}

TEST(DocModel, ImagesInheritPrecedingSection) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  const auto doc = fixtures::sample_paper(blobs);
  EXPECT_EQ(doc.effective_section(2), std::vector<std::string>{"Introduction"});
  EXPECT_EQ(doc.effective_section(5), (std::vector<std::string>{"Method", "Sampler"}));
}

TEST(DocModel, SaveAndLoadWithBlobs) {
  TempDir src;
  TempDir dst;
  const BlobStore blobs(src / "blobs");
  const auto doc = fixtures::sample_paper(blobs);
  save_document(doc, dst / "doc" / "document.xml");
  const auto loaded = load_document(dst / "doc" / "document.xml");
  EXPECT_EQ(loaded, doc);
  EXPECT_TRUE(std::filesystem::exists(dst / "doc" / "blobs"));
}

TEST(ExternalParse, TeiFixture) {
  TempDir dir;
  const auto pdf = dir / "paper.pdf";
  write_file_atomic(pdf, "%PDF-1.4 fake");
  const auto data = fixtures::data_dir() / "parser";
  std::filesystem::copy_file(data / "fig1.png", dir / "fig1.png");
  const ExternalParserConfig cfg{"cat '" + (data / "paper.tei.xml").string() + "' # {pdf} {out}", dir / "blobs"};
  auto doc = external_parse(pdf, cfg);
  EXPECT_EQ(doc.n_text(), 3u);
  EXPECT_EQ(doc.m_image(), 1u);
  EXPECT_EQ(doc.doc_id(), "paper");
}

TEST(ExternalParse, NonzeroExitIsExternalToolError) {
  TempDir dir;
  const auto pdf = dir / "paper.pdf";
  write_file_atomic(pdf, "%PDF");
  try {
    external_parse(pdf, ExternalParserConfig{"echo broken >&2; exit 3", dir / "blobs"});
    FAIL() << "expected ExternalToolError";
  } catch (const ExternalToolError& e) {
    EXPECT_EQ(e.exit_status(), 3);
    EXPECT_NE(e.diagnostics().find("broken"), std::string::npos);
  }
}

TEST(ExternalParse, BothDialectsGiveTheSameCanonicalDocument) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  const auto data = fixtures::data_dir() / "parser";
  const auto tei = convert_parser_output(read_file(data / "paper.tei.xml"), {data}, blobs, "paper", "paper.pdf");
  const auto blocks =
      convert_parser_output(read_file(data / "paper.blocks.json"), {data}, blobs, "paper", "paper.pdf");
  EXPECT_EQ(serialize_document(tei), serialize_document(blocks));
  EXPECT_EQ(tei, blocks);
}

TEST(ExternalParse, UnmappableOutput) {
  TempDir dir;
  const BlobStore blobs(dir / "blobs");
  EXPECT_THROW(convert_parser_output("not a document", {}, blobs, "d", "s"), ConversionError);
  EXPECT_THROW(convert_parser_output("{\"blocks\":[{\"type\":\"poem\"}]}", {}, blobs, "d", "s"), ConversionError);
  EXPECT_THROW(convert_parser_output("{\"blocks\":[]}", {}, blobs, "d", "s"), ConversionError);
}
