#include "xml_reader.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <tuple>

#include "wukong/errors.hpp"
#include "wukong/text.hpp"

namespace wukong::xml {

std::string_view Node::local_name() const noexcept {
  std::string_view n = name;
  const auto colon = n.find(':');
  return colon == std::string_view::npos ? n : n.substr(colon + 1);
}

const std::string* Node::attribute(std::string_view key) const noexcept {
  for (const auto& [k, v] : attributes) {
    if (k == key) return &v;
  }
  return nullptr;
}

std::vector<const Node*> Node::elements() const {
  std::vector<const Node*> out;
  for (const auto& c : children) {
    if (c.is_element()) out.push_back(&c);
  }
  return out;
}

std::vector<const Node*> Node::elements(std::string_view local) const {
  std::vector<const Node*> out;
  for (const auto& c : children) {
    if (c.is_element() && c.local_name() == local) out.push_back(&c);
  }
  return out;
}

const Node* Node::first(std::string_view local) const {
  for (const auto& c : children) {
    if (c.is_element() && c.local_name() == local) return &c;
  }
  return nullptr;
}

std::string Node::inner_text() const {
  if (kind == Kind::Text) return text;
  std::string out;
  for (const auto& c : children) out += c.inner_text();
  return out;
}

namespace {

class Reader {
 public:
  explicit Reader(std::string input) : s_(std::move(input)) {
    line_starts_.push_back(0);
    for (std::size_t i = 0; i < s_.size(); ++i) {
      if (s_[i] == '\n') line_starts_.push_back(i + 1);
    }
  }

  Node document() {
    skip_misc();
    if (at_end()) fail("no root element");
    if (peek() != '<') fail("expected '<'");
    Node root = element();
    skip_misc();
    if (!at_end()) fail("content after root element");
    return root;
  }

 private:
  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return s_[pos_]; }
  bool starts_with(std::string_view t) const { return std::string_view(s_).substr(pos_, t.size()) == t; }

  [[noreturn]] void fail(const std::string& what) const { fail_at(what, pos_); }

  [[noreturn]] void fail_at(const std::string& what, std::size_t at) const {
    auto [line, col] = position(at);
    throw ParseError(what, line, col);
  }

  std::pair<std::size_t, std::size_t> position(std::size_t at) const {
    const auto it = std::upper_bound(line_starts_.begin(), line_starts_.end(), at);
    const auto line = static_cast<std::size_t>(it - line_starts_.begin());
    return {line, at - line_starts_[line - 1] + 1};
  }

  void skip_ws() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\n')) ++pos_;
  }

  void skip_until(std::string_view terminator, const char* what) {
    const auto end = s_.find(terminator, pos_);
    if (end == std::string::npos) fail(std::string("unterminated ") + what);
    pos_ = end + terminator.size();
  }

  void skip_misc() {
    for (;;) {
      skip_ws();
      if (starts_with("<?")) {
        skip_until("?>", "processing instruction");
      } else if (starts_with("<!--")) {
        skip_until("-->", "comment");
      } else if (starts_with("<!DOCTYPE")) {
        skip_doctype();
      } else {
        return;
      }
    }
  }

  void skip_doctype() {
    int depth = 0;
    while (!at_end()) {
      const char c = s_[pos_++];
      if (c == '[') ++depth;
      if (c == ']') --depth;
      if (c == '>' && depth <= 0) return;
    }
    fail("unterminated DOCTYPE");
  }

  static bool name_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || c == '-' || c == '.' || c == ':' || u >= 0x80;
  }

  std::string name() {
    const auto start = pos_;
    while (!at_end() && name_char(peek())) ++pos_;
    if (start == pos_) fail("expected a name");
    return s_.substr(start, pos_ - start);
  }

  std::string decode(std::string_view raw, std::size_t raw_offset) const {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out.push_back(raw[i]);
        continue;
      }
      const auto semi = raw.find(';', i);
      if (semi == std::string_view::npos) fail_at("unterminated entity reference", raw_offset + i);
      const auto ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "amp") {
        out.push_back('&');
      } else if (ent == "lt") {
        out.push_back('<');
      } else if (ent == "gt") {
        out.push_back('>');
      } else if (ent == "quot") {
        out.push_back('"');
      } else if (ent == "apos") {
        out.push_back('\'');
      } else if (!ent.empty() && ent[0] == '#') {
        const bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
        const auto digits = ent.substr(hex ? 2 : 1);
        std::uint32_t cp = 0;
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
        if (ec != std::errc() || p != digits.data() + digits.size() || digits.empty() ||
            cp > 0x10ffff || cp == 0) {
          fail_at("invalid character reference", raw_offset + i);
        }
        out += text::encode_utf8(std::u32string(1, static_cast<char32_t>(cp)));
      } else {
        fail_at("unknown entity &" + std::string(ent) + ";", raw_offset + i);
      }
      i = semi;
    }
    return out;
  }

  Node element() {
    Node node;
    const auto start = pos_;
    std::tie(node.line, node.column) = position(start);
    ++pos_;  // '<'
    node.name = name();
    for (;;) {
      const auto before_ws = pos_;
      skip_ws();
      if (at_end()) fail("unterminated start tag <" + node.name + ">");
      if (starts_with("/>")) {
        pos_ += 2;
        return node;
      }
      if (peek() == '>') {
        ++pos_;
        break;
      }
      if (before_ws == pos_) fail("expected whitespace before attribute");
      const auto attr_at = pos_;
      auto key = name();
      skip_ws();
      if (at_end() || peek() != '=') fail("expected '=' after attribute " + key);
      ++pos_;
      skip_ws();
      if (at_end() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
      const char quote = s_[pos_++];
      const auto vstart = pos_;
      const auto vend = s_.find(quote, pos_);
      if (vend == std::string::npos) fail("unterminated attribute value");
      const auto raw = std::string_view(s_).substr(vstart, vend - vstart);
      if (raw.find('<') != std::string_view::npos) fail_at("'<' in attribute value", vstart);
      if (node.attribute(key) != nullptr) fail_at("duplicate attribute " + key, attr_at);
      node.attributes.emplace_back(std::move(key), decode(raw, vstart));
      pos_ = vend + 1;
    }
    content(node);
    return node;
  }

  void append_text(Node& parent, std::string text, std::size_t at) {
    if (text.empty()) return;
    if (!parent.children.empty() && parent.children.back().kind == Node::Kind::Text) {
      parent.children.back().text += text;
      return;
    }
    Node t;
    t.kind = Node::Kind::Text;
    t.text = std::move(text);
    std::tie(t.line, t.column) = position(at);
    parent.children.push_back(std::move(t));
  }

  void content(Node& parent) {
    for (;;) {
      if (at_end()) fail("missing end tag </" + parent.name + ">");
      if (starts_with("</")) {
        pos_ += 2;
        const auto at = pos_;
        const auto closing = name();
        if (closing != parent.name) {
          fail_at("mismatched end tag </" + closing + ">, expected </" + parent.name + ">", at);
        }
        skip_ws();
        if (at_end() || peek() != '>') fail("expected '>'");
        ++pos_;
        return;
      }
      if (starts_with("<!--")) {
        skip_until("-->", "comment");
      } else if (starts_with("<![CDATA[")) {
        const auto at = pos_;
        pos_ += 9;
        const auto end = s_.find("]]>", pos_);
        if (end == std::string::npos) fail("unterminated CDATA section");
        append_text(parent, s_.substr(pos_, end - pos_), at);
        pos_ = end + 3;
      } else if (starts_with("<?")) {
        skip_until("?>", "processing instruction");
      } else if (peek() == '<') {
        parent.children.push_back(element());
      } else {
        const auto start = pos_;
        const auto end = s_.find('<', pos_);
        const auto stop = end == std::string::npos ? s_.size() : end;
        append_text(parent, decode(std::string_view(s_).substr(start, stop - start), start), start);
        pos_ = stop;
      }
    }
  }

  std::string s_;
  std::vector<std::size_t> line_starts_;
  std::size_t pos_ = 0;
};

std::string normalize_newlines(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < in.size() && in[i + 1] == '\n') ++i;
    } else {
      out.push_back(in[i]);
    }
  }
  return out;
}

}  // namespace

Node parse(std::string_view input) { return Reader(normalize_newlines(input)).document(); }

std::string escape_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string escape_attribute(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#10;"; break;
      case '\t': out += "&#9;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace wukong::xml
