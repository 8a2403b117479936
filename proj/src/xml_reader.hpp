#pragma once

// Minimal non-validating XML reader: elements, attributes, character data,
// CDATA, comments, processing instructions and DOCTYPE (skipped), and the
// predefined plus numeric character references. Enough for the canonical
// document format and the TEI output of external parsers.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wukong::xml {

struct Node {
  enum class Kind { Element, Text };

  Kind kind = Kind::Element;
  std::string name;  // qualified name for elements
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Node> children;
  std::string text;  // decoded character data for Text nodes
  std::size_t line = 0;
  std::size_t column = 0;

  bool is_element() const noexcept { return kind == Kind::Element; }
  /// Name with any namespace prefix removed.
  std::string_view local_name() const noexcept;
  const std::string* attribute(std::string_view key) const noexcept;
  std::vector<const Node*> elements() const;
  std::vector<const Node*> elements(std::string_view local) const;
  const Node* first(std::string_view local) const;
  /// Concatenated character data of this subtree.
  std::string inner_text() const;
};

/// Parses a whole document and returns its root element. CR and CRLF are
/// normalized to LF first. Throws ParseError with line/column.
Node parse(std::string_view input);

std::string escape_text(std::string_view s);
std::string escape_attribute(std::string_view s);

}  // namespace wukong::xml
