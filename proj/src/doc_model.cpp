#include "wukong/doc_model.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

#include "wukong/errors.hpp"
#include "wukong/hash.hpp"
#include "wukong/text.hpp"
#include "xml_reader.hpp"

namespace fs = std::filesystem;

namespace wukong {

const char* modality_name(Modality m) noexcept { return m == Modality::Text ? "text" : "image"; }

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::Text;
  if (s == "image") return Modality::Image;
  throw DomainError("unknown modality: " + std::string(s));
}

const std::string& chunk_id(const Chunk& c) noexcept {
  return std::visit([](const auto& x) -> const std::string& { return x.chunk_id; }, c);
}

std::size_t order_index(const Chunk& c) noexcept {
  return std::visit([](const auto& x) { return x.order_index; }, c);
}

Modality modality(const Chunk& c) noexcept {
  return std::holds_alternative<TextChunk>(c) ? Modality::Text : Modality::Image;
}

ParsedDocument::ParsedDocument(std::string doc_id, std::string source_name, std::vector<Chunk> chunks)
    : doc_id_(std::move(doc_id)), source_name_(std::move(source_name)), chunks_(std::move(chunks)) {
  if (doc_id_.empty()) throw IntegrityError("document id is empty");
  if (chunks_.empty()) throw IntegrityError("document has no chunks");
  std::stable_sort(chunks_.begin(), chunks_.end(),
                   [](const Chunk& a, const Chunk& b) { return order_index(a) < order_index(b); });
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    const auto& c = chunks_[i];
    const auto& id = chunk_id(c);
    if (order_index(c) != i) {
      if (i > 0 && order_index(chunks_[i - 1]) == order_index(c)) {
        throw IntegrityError("duplicate order_index " + std::to_string(order_index(c)));
      }
      throw IntegrityError("order_index values must be 0.." + std::to_string(chunks_.size() - 1) +
                           " without gaps; found " + std::to_string(order_index(c)));
    }
    if (id.empty()) throw IntegrityError("empty chunk id at order " + std::to_string(i));
    if (!index_.emplace(id, i).second) throw IntegrityError("duplicate chunk id " + id);
    if (const auto* t = std::get_if<TextChunk>(&c)) {
      if (text::trim(t->text).empty()) throw IntegrityError("text chunk " + id + " is blank");
      for (const auto& heading : t->section_path) {
        if (heading.empty()) throw IntegrityError("empty section heading in chunk " + id);
      }
      ++n_text_;
    } else {
      const auto& img = std::get<ImageChunk>(c);
      content_address_hex(img.image_ref.hash);
      ++m_image_;
    }
  }

  // Images take the section of the closest preceding text chunk.
  section_owner_.assign(chunks_.size(), chunks_.size());
  std::size_t last_text = chunks_.size();
  for (std::size_t i = 0; i < chunks_.size(); ++i) {
    if (std::holds_alternative<TextChunk>(chunks_[i])) last_text = i;
    section_owner_[i] = last_text;
  }
  std::size_t next_text = chunks_.size();
  for (std::size_t i = chunks_.size(); i-- > 0;) {
    if (std::holds_alternative<TextChunk>(chunks_[i])) next_text = i;
    if (section_owner_[i] == chunks_.size()) section_owner_[i] = next_text;
  }
}

const Chunk* ParsedDocument::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &chunks_[it->second];
}

const std::vector<std::string>& ParsedDocument::effective_section(std::size_t order) const {
  static const std::vector<std::string> kRoot;
  if (order >= chunks_.size() || section_owner_[order] >= chunks_.size()) return kRoot;
  return std::get<TextChunk>(chunks_[section_owner_[order]]).section_path;
}

bool operator==(const ParsedDocument& a, const ParsedDocument& b) {
  if (a.doc_id_ != b.doc_id_ || a.source_name_ != b.source_name_ || a.chunks_.size() != b.chunks_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.chunks_.size(); ++i) {
    const auto& x = a.chunks_[i];
    const auto& y = b.chunks_[i];
    if (x.index() != y.index()) return false;
    if (const auto* tx = std::get_if<TextChunk>(&x)) {
      const auto& ty = std::get<TextChunk>(y);
      if (tx->chunk_id != ty.chunk_id || tx->order_index != ty.order_index ||
          tx->section_path != ty.section_path || tx->text != ty.text) {
        return false;
      }
    } else {
      const auto& ix = std::get<ImageChunk>(x);
      const auto& iy = std::get<ImageChunk>(y);
      if (ix.chunk_id != iy.chunk_id || ix.order_index != iy.order_index || ix.caption != iy.caption ||
          ix.figure_label != iy.figure_label || ix.image_ref.hash != iy.image_ref.hash) {
        return false;
      }
    }
  }
  return true;
}

// --- blobs ---------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  thread_local std::mt19937_64 rng{std::random_device{}()};
  const auto tmp = path.string() + ".tmp" + std::to_string(rng());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp);
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move into place: " + path.string());
  }
}

BlobStore::BlobStore(fs::path dir) : dir_(std::move(dir)) {}

BlobRef BlobStore::put(std::string_view bytes) const {
  BlobRef ref{content_address(bytes), {}};
  ref.locator = locate(ref.hash);
  if (!fs::exists(ref.locator)) write_file_atomic(ref.locator, bytes);
  return ref;
}

bool BlobStore::contains(std::string_view hash) const { return fs::exists(locate(hash)); }

fs::path BlobStore::locate(std::string_view hash) const { return dir_ / content_address_hex(hash); }

std::string BlobStore::read(std::string_view hash) const {
  const auto path = locate(hash);
  if (!fs::exists(path)) throw MissingBlobError("blob not found: " + std::string(hash));
  auto bytes = read_file(path);
  if (content_address(bytes) != hash) throw IntegrityError("blob content does not match " + std::string(hash));
  return bytes;
}

BlobResolver verifying_resolver(const BlobStore& store) {
  return [store](const std::string& hash) {
    store.read(hash);
    return store.locate(hash);
  };
}

// --- canonical format ------------------------------------------------------

std::string encode_section_path(const std::vector<std::string>& path) {
  std::string out;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) out.push_back('|');
    for (char c : path[i]) {
      if (c == '|' || c == '\\') out.push_back('\\');
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::string> decode_section_path(std::string_view encoded) {
  std::vector<std::string> out;
  if (encoded.empty()) return out;
  std::string cur;
  for (std::size_t i = 0; i < encoded.size(); ++i) {
    const char c = encoded[i];
    if (c == '\\' && i + 1 < encoded.size()) {
      cur.push_back(encoded[++i]);
    } else if (c == '|') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

namespace {

std::string escape_cr(std::string s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '\r') {
      out += "&#13;";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string text_content(std::string_view s) { return escape_cr(xml::escape_text(s)); }
std::string attr(std::string_view s) { return escape_cr(xml::escape_attribute(s)); }

const std::string& required(const xml::Node& n, std::string_view key) {
  const auto* v = n.attribute(key);
  if (v == nullptr) {
    throw ParseError("<" + n.name + "> is missing attribute '" + std::string(key) + "'", n.line, n.column);
  }
  return *v;
}

std::size_t parse_order(const xml::Node& n) {
  const auto& s = required(n, "order");
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("order must be a non-negative integer, got '" + s + "'", n.line, n.column);
  }
  return v;
}

void check_attributes(const xml::Node& n, std::initializer_list<std::string_view> allowed) {
  for (const auto& [k, v] : n.attributes) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw ParseError("unexpected attribute '" + k + "' on <" + n.name + ">", n.line, n.column);
    }
  }
}

std::string leaf_text(const xml::Node& n) {
  std::string out;
  for (const auto& c : n.children) {
    if (c.is_element()) throw ParseError("unexpected element <" + c.name + "> inside <" + n.name + ">", c.line, c.column);
    out += c.text;
  }
  return out;
}

}  // namespace

ParsedDocument parse_interleaved(std::string_view serialized, const BlobResolver& resolve) {
  const auto root = xml::parse(serialized);
  if (root.name != "document") {
    throw ParseError("root element must be <document>, got <" + root.name + ">", root.line, root.column);
  }
  check_attributes(root, {"id", "source"});
  const auto& doc_id = required(root, "id");
  const auto* source = root.attribute("source");

  std::vector<Chunk> chunks;
  std::vector<std::size_t> seen_orders;
  for (const auto& child : root.children) {
    if (!child.is_element()) {
      if (!text::trim(child.text).empty()) {
        throw ParseError("unexpected character data between chunks", child.line, child.column);
      }
      continue;
    }
    if (child.name == "text") {
      check_attributes(child, {"id", "order", "section"});
      TextChunk t;
      t.chunk_id = required(child, "id");
      t.order_index = parse_order(child);
      if (const auto* s = child.attribute("section")) t.section_path = decode_section_path(*s);
      t.text = leaf_text(child);
      chunks.emplace_back(std::move(t));
    } else if (child.name == "image") {
      check_attributes(child, {"id", "order", "label", "hash"});
      ImageChunk img;
      img.chunk_id = required(child, "id");
      img.order_index = parse_order(child);
      if (const auto* l = child.attribute("label")) img.figure_label = *l;
      img.image_ref.hash = required(child, "hash");
      img.caption = leaf_text(child);
      try {
        content_address_hex(img.image_ref.hash);
      } catch (const IntegrityError&) {
        throw ParseError("malformed image hash '" + img.image_ref.hash + "'", child.line, child.column);
      }
      img.image_ref.locator = resolve(img.image_ref.hash);
      chunks.emplace_back(std::move(img));
    } else {
      throw ParseError("unexpected element <" + child.name + ">", child.line, child.column);
    }
  }
  if (chunks.empty()) throw ParseError("no chunks", root.line, root.column);
  return ParsedDocument(doc_id, source ? *source : std::string(), std::move(chunks));
}

std::string serialize_document(const ParsedDocument& doc) {
  std::string out;
  out += "<document id=\"" + attr(doc.doc_id()) + "\" source=\"" + attr(doc.source_name()) + "\">\n";
  for (const auto& c : doc.chunks()) {
    if (const auto* t = std::get_if<TextChunk>(&c)) {
      out += "  <text id=\"" + attr(t->chunk_id) + "\" order=\"" + std::to_string(t->order_index) + "\"";
      if (!t->section_path.empty()) out += " section=\"" + attr(encode_section_path(t->section_path)) + "\"";
      out += ">" + text_content(t->text) + "</text>\n";
    } else {
      const auto& img = std::get<ImageChunk>(c);
      out += "  <image id=\"" + attr(img.chunk_id) + "\" order=\"" + std::to_string(img.order_index) + "\"";
      if (img.figure_label) out += " label=\"" + attr(*img.figure_label) + "\"";
      out += " hash=\"" + attr(img.image_ref.hash) + "\">" + text_content(img.caption) + "</image>\n";
    }
  }
  out += "</document>\n";
  return out;
}

ParsedDocument load_document(const fs::path& file) {
  const auto bytes = read_file(file);
  const BlobStore store(file.parent_path() / "blobs");
  return parse_interleaved(bytes, verifying_resolver(store));
}

void save_document(const ParsedDocument& doc, const fs::path& file) {
  const BlobStore store(file.parent_path() / "blobs");
  for (const auto& c : doc.chunks()) {
    const auto* img = std::get_if<ImageChunk>(&c);
    if (img == nullptr || store.contains(img->image_ref.hash)) continue;
    if (img->image_ref.locator.empty() || !fs::exists(img->image_ref.locator)) {
      throw MissingBlobError("blob for " + img->chunk_id + " has no readable locator");
    }
    const auto ref = store.put(read_file(img->image_ref.locator));
    if (ref.hash != img->image_ref.hash) throw IntegrityError("blob content does not match " + img->image_ref.hash);
  }
  write_file_atomic(file, serialize_document(doc));
}

}  // namespace wukong
