#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <random>

#include "wukong/doc_model.hpp"
#include "wukong/errors.hpp"
#include "wukong/text.hpp"
#include "xml_reader.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wukong {

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out += "'";
  return out;
}

std::string replace_all(std::string s, std::string_view from, const std::string& to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::string clean(std::string_view s) { return text::trim(text::collapse_whitespace(s)); }

/// Accumulates chunks in reading order with sequential ids.
class Builder {
 public:
  Builder(std::vector<fs::path> asset_dirs, const BlobStore& blobs)
      : asset_dirs_(std::move(asset_dirs)), blobs_(blobs) {}

  void paragraph(std::string_view raw, const std::vector<std::string>& section) {
    auto body = clean(raw);
    if (body.empty()) return;
    TextChunk t;
    t.chunk_id = "t" + std::to_string(n_text_++);
    t.order_index = chunks_.size();
    t.section_path = section;
    t.text = std::move(body);
    chunks_.emplace_back(std::move(t));
  }

  void figure(std::optional<std::string> label, std::string_view caption, const std::string* graphic,
              std::string_view fallback_content) {
    ImageChunk img;
    img.chunk_id = "i" + std::to_string(m_image_++);
    img.order_index = chunks_.size();
    img.caption = clean(caption);
    if (label && !clean(*label).empty()) img.figure_label = clean(*label);
    if (graphic != nullptr && !graphic->empty()) {
      fs::path p(*graphic);
      if (p.is_relative()) {
        for (const auto& dir : asset_dirs_) {
          if (fs::exists(dir / *graphic)) {
            p = dir / *graphic;
            break;
          }
        }
      }
      if (!fs::exists(p)) throw ConversionError("figure graphic not found: " + *graphic);
      img.image_ref = blobs_.put(read_file(p));
    } else {
      // Tables and figures without an extracted raster keep their textual
      // content as the blob so they stay content-addressed.
      std::string placeholder = "placeholder-figure\n";
      placeholder += img.figure_label.value_or("") + "\n" + img.caption + "\n" + clean(fallback_content);
      img.image_ref = blobs_.put(placeholder);
    }
    chunks_.emplace_back(std::move(img));
  }

  ParsedDocument finish(const std::string& doc_id, const std::string& source) {
    if (chunks_.empty()) throw ConversionError("parser output contains no paragraphs or figures");
    return ParsedDocument(doc_id, source, std::move(chunks_));
  }

 private:
  std::vector<fs::path> asset_dirs_;
  const BlobStore& blobs_;
  std::vector<Chunk> chunks_;
  std::size_t n_text_ = 0;
  std::size_t m_image_ = 0;
};

std::string tei_label(const xml::Node& fig) {
  const auto* type = fig.attribute("type");
  const bool table = type != nullptr && *type == "table";
  if (const auto* label = fig.first("label")) {
    const auto l = clean(label->inner_text());
    if (!l.empty()) return std::string(table ? "Table " : "Figure ") + l;
  }
  if (const auto* head = fig.first("head")) {
    auto h = clean(head->inner_text());
    while (!h.empty() && (h.back() == ':' || h.back() == '.' || h.back() == ' ')) h.pop_back();
    return h;
  }
  return {};
}

void walk_tei(const xml::Node& node, std::vector<std::string>& section, Builder& out) {
  for (const auto& child : node.children) {
    if (!child.is_element()) continue;
    const auto name = child.local_name();
    if (name == "div") {
      const auto* head = child.first("head");
      const bool pushed = head != nullptr && !clean(head->inner_text()).empty();
      if (pushed) section.push_back(clean(head->inner_text()));
      walk_tei(child, section, out);
      if (pushed) section.pop_back();
    } else if (name == "p") {
      out.paragraph(child.inner_text(), section);
    } else if (name == "figure") {
      const auto* desc = child.first("figDesc");
      const auto* graphic = child.first("graphic");
      const auto* table = child.first("table");
      out.figure(tei_label(child), desc ? desc->inner_text() : std::string(),
                 graphic ? graphic->attribute("url") : nullptr, table ? table->inner_text() : std::string());
    } else if (name != "head") {
      walk_tei(child, section, out);
    }
  }
}

ParsedDocument convert_tei(std::string_view output, Builder& b, const std::string& doc_id,
                           const std::string& source) {
  xml::Node root;
  try {
    root = xml::parse(output);
  } catch (const ParseError& e) {
    throw ConversionError(std::string("parser emitted malformed XML: ") + e.what());
  }
  if (root.local_name() != "TEI") throw ConversionError("expected a TEI document, got <" + root.name + ">");
  const auto* txt = root.first("text");
  const auto* body = txt ? txt->first("body") : nullptr;
  if (body == nullptr) throw ConversionError("TEI document has no <text><body>");
  std::vector<std::string> section;
  walk_tei(*body, section, b);
  return b.finish(doc_id, source);
}

ParsedDocument convert_blocks(std::string_view output, Builder& b, const std::string& doc_id,
                              const std::string& source) {
  json doc;
  try {
    doc = json::parse(output);
  } catch (const json::exception& e) {
    throw ConversionError(std::string("parser emitted malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("blocks") || !doc["blocks"].is_array()) {
    throw ConversionError("JSON output must be an object with a 'blocks' array");
  }
  std::vector<std::string> section;
  for (const auto& block : doc["blocks"]) {
    const auto type = block.value("type", std::string());
    if (type == "heading") {
      const auto level = block.value("level", 1);
      if (level < 1) throw ConversionError("heading level must be >= 1");
      section.resize(std::min<std::size_t>(section.size(), static_cast<std::size_t>(level - 1)));
      section.push_back(clean(block.value("text", std::string())));
    } else if (type == "paragraph") {
      b.paragraph(block.value("text", std::string()), section);
    } else if (type == "figure" || type == "table") {
      std::optional<std::string> label;
      if (block.contains("label") && block["label"].is_string()) label = block["label"].get<std::string>();
      const auto image = block.value("image", std::string());
      b.figure(label, block.value("caption", std::string()), image.empty() ? nullptr : &image,
               block.value("content", std::string()));
    } else {
      throw ConversionError("unknown block type '" + type + "'");
    }
  }
  return b.finish(doc_id, source);
}

}  // namespace

ParsedDocument convert_parser_output(std::string_view output, const std::vector<fs::path>& asset_dirs,
                                     const BlobStore& blobs, const std::string& doc_id,
                                     const std::string& source_name) {
  Builder builder(asset_dirs, blobs);
  const auto lead = output.find_first_not_of(" \t\r\n");
  if (lead == std::string_view::npos) throw ConversionError("parser produced no output");
  if (output[lead] == '<') return convert_tei(output, builder, doc_id, source_name);
  if (output[lead] == '{') return convert_blocks(output, builder, doc_id, source_name);
  throw ConversionError("unrecognized parser output dialect");
}

ParsedDocument external_parse(const fs::path& pdf, const ExternalParserConfig& config) {
  if (config.command.empty()) throw ConfigError("no external parser command configured");
  if (!fs::is_regular_file(pdf)) throw IoError("cannot read " + pdf.string());

  std::mt19937_64 rng{std::random_device{}()};
  const auto scratch = fs::temp_directory_path() / ("wukong-parse-" + std::to_string(rng()));
  fs::create_directories(scratch);
  struct Cleanup {
    fs::path dir;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  } cleanup{scratch};

  const auto stderr_file = scratch / "stderr.txt";
  auto command = replace_all(config.command, "{pdf}", shell_quote(pdf.string()));
  command = replace_all(command, "{out}", shell_quote(scratch.string()));
  command = "{ " + command + "\n} 2>" + shell_quote(stderr_file.string());

  FILE* pipe = ::popen(command.c_str(), "r");
  if (pipe == nullptr) throw ExternalToolError("cannot start parser: " + config.command, -1, {});
  std::string output;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
  const int status = ::pclose(pipe);
  const int exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  if (exit_code != 0) {
    std::string diagnostics;
    if (fs::exists(stderr_file)) diagnostics = read_file(stderr_file);
    throw ExternalToolError("external parser failed: " + config.command, exit_code, std::move(diagnostics));
  }

  const BlobStore blobs(config.blob_dir);
  return convert_parser_output(output, {scratch, pdf.parent_path()}, blobs, pdf.stem().string(), pdf.filename().string());
}

}  // namespace wukong
