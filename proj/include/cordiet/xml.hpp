#pragma once

// Small non-validating XML reader producing an element tree, plus escaping
// helpers for writers. Supports elements, attributes, character data,
// CDATA, comments, processing instructions, a skipped DOCTYPE and the five
// predefined entities plus numeric character references. Input must be UTF-8.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cordiet/error.hpp"

namespace cordiet::xml {

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Element> children;
  std::string text;  // concatenated character data directly inside this element
  std::size_t line = 0;
  std::size_t column = 0;

  std::optional<std::string> attribute(std::string_view key) const {
    for (const auto& [k, v] : attributes)
      if (k == key) return v;
    return std::nullopt;
  }

  std::string attribute_or(std::string_view key, std::string fallback) const {
    auto v = attribute(key);
    return v ? *v : std::move(fallback);
  }

  const Element* child(std::string_view child_name) const {
    for (const auto& c : children)
      if (c.name == child_name) return &c;
    return nullptr;
  }

  std::string where() const {
    return "line " + std::to_string(line) + ", column " + std::to_string(column);
  }
};

inline void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

namespace detail {

class Reader {
 public:
  explicit Reader(std::string_view src) : s_(src) {}

  Element parse_document() {
    skip_prolog();
    if (eof() || peek() != '<') fail("expected root element");
    Element root = parse_element();
    skip_misc();
    if (!eof()) fail("content after root element");
    return root;
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError("XML: " + msg, line_, col_); }

  bool eof() const { return pos_ >= s_.size(); }
  char peek(std::size_t k = 0) const { return pos_ + k < s_.size() ? s_[pos_ + k] : '\0'; }
  bool starts_with(std::string_view t) const { return s_.substr(pos_, t.size()) == t; }

  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && pos_ < s_.size(); ++i, ++pos_) {
      if (s_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else if ((static_cast<unsigned char>(s_[pos_]) & 0xC0) != 0x80) {
        ++col_;
      }
    }
  }

  void expect(std::string_view t) {
    if (!starts_with(t)) fail("expected '" + std::string(t) + "'");
    advance(t.size());
  }

  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }
  static bool is_name_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == ':' ||
           (static_cast<unsigned char>(c) >= 0x80);
  }
  static bool is_name_char(char c) {
    return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
  }

  void skip_space() {
    while (!eof() && is_space(peek())) advance();
  }

  void skip_until(std::string_view terminator, const char* what) {
    while (!eof() && !starts_with(terminator)) advance();
    if (eof()) fail(std::string("unterminated ") + what);
    advance(terminator.size());
  }

  void skip_misc() {
    for (;;) {
      skip_space();
      if (starts_with("<!--")) {
        advance(4);
        skip_until("-->", "comment");
      } else if (starts_with("<?")) {
        advance(2);
        skip_until("?>", "processing instruction");
      } else {
        return;
      }
    }
  }

  void skip_prolog() {
    if (starts_with("\xEF\xBB\xBF")) pos_ += 3;
    for (;;) {
      skip_misc();
      if (starts_with("<!DOCTYPE")) {
        int depth = 0;
        while (!eof()) {
          char c = peek();
          advance();
          if (c == '[') ++depth;
          else if (c == ']') --depth;
          else if (c == '>' && depth <= 0) break;
        }
      } else {
        return;
      }
    }
  }

  std::string parse_name() {
    if (eof() || !is_name_start(peek())) fail("expected name");
    std::size_t start = pos_;
    while (!eof() && is_name_char(peek())) advance();
    return std::string(s_.substr(start, pos_ - start));
  }

  void parse_reference(std::string& out) {
    expect("&");
    std::size_t start = pos_;
    while (!eof() && peek() != ';' && pos_ - start < 12) advance();
    if (peek() != ';') fail("unterminated entity reference");
    std::string_view ent = s_.substr(start, pos_ - start);
    advance();
    if (ent == "lt") out += '<';
    else if (ent == "gt") out += '>';
    else if (ent == "amp") out += '&';
    else if (ent == "quot") out += '"';
    else if (ent == "apos") out += '\'';
    else if (!ent.empty() && ent[0] == '#') {
      std::uint32_t cp = 0;
      bool hex = ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X');
      std::string_view digits = ent.substr(hex ? 2 : 1);
      if (digits.empty()) fail("empty character reference");
      for (char c : digits) {
        int v;
        if (c >= '0' && c <= '9') v = c - '0';
        else if (hex && c >= 'a' && c <= 'f') v = c - 'a' + 10;
        else if (hex && c >= 'A' && c <= 'F') v = c - 'A' + 10;
        else fail("bad character reference");
        cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
        if (cp > 0x10FFFF) fail("character reference out of range");
      }
      append_utf8(out, cp);
    } else {
      fail("unknown entity '&" + std::string(ent) + ";'");
    }
  }

  std::string parse_attribute_value() {
    char quote = peek();
    if (quote != '"' && quote != '\'') fail("expected quoted attribute value");
    advance();
    std::string value;
    while (!eof() && peek() != quote) {
      if (peek() == '<') fail("'<' in attribute value");
      if (peek() == '&') {
        parse_reference(value);
      } else {
        value.push_back(peek());
        advance();
      }
    }
    if (eof()) fail("unterminated attribute value");
    advance();
    return value;
  }

  Element parse_element() {
    Element el;
    el.line = line_;
    el.column = col_;
    expect("<");
    el.name = parse_name();
    for (;;) {
      bool had_space = !eof() && is_space(peek());
      skip_space();
      if (eof()) fail("unterminated start tag <" + el.name + ">");
      if (starts_with("/>")) {
        advance(2);
        return el;
      }
      if (peek() == '>') {
        advance();
        break;
      }
      if (!had_space) fail("expected whitespace between attributes");
      std::string key = parse_name();
      skip_space();
      expect("=");
      skip_space();
      std::string value = parse_attribute_value();
      if (el.attribute(key)) fail("duplicate attribute '" + key + "'");
      el.attributes.emplace_back(std::move(key), std::move(value));
    }
    parse_content(el);
    return el;
  }

  void parse_content(Element& el) {
    for (;;) {
      if (eof()) fail("missing end tag </" + el.name + ">");
      if (starts_with("</")) {
        advance(2);
        std::string closing = parse_name();
        if (closing != el.name) fail("mismatched end tag </" + closing + ">, expected </" + el.name + ">");
        skip_space();
        expect(">");
        return;
      }
      if (starts_with("<!--")) {
        advance(4);
        skip_until("-->", "comment");
      } else if (starts_with("<![CDATA[")) {
        advance(9);
        std::size_t start = pos_;
        while (!eof() && !starts_with("]]>")) advance();
        if (eof()) fail("unterminated CDATA section");
        el.text.append(s_.substr(start, pos_ - start));
        advance(3);
      } else if (starts_with("<?")) {
        advance(2);
        skip_until("?>", "processing instruction");
      } else if (peek() == '<') {
        el.children.push_back(parse_element());
      } else if (peek() == '&') {
        parse_reference(el.text);
      } else {
        el.text.push_back(peek());
        advance();
      }
    }
  }
};

}  // namespace detail

inline Element parse(std::string_view source) { return detail::Reader(source).parse_document(); }

inline std::string escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

// Serializes an element tree back to text. Character data is written before
// child elements, which is lossless for the element-only and text-only
// content models used by the corpus and ontology schemas.
inline void write(std::string& out, const Element& el, int indent = 0) {
  std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  out += pad + "<" + el.name;
  for (const auto& [k, v] : el.attributes) out += " " + k + "=\"" + escape(v) + "\"";
  if (el.children.empty() && el.text.empty()) {
    out += "/>\n";
    return;
  }
  out += ">";
  out += escape(el.text);
  if (!el.children.empty()) {
    out += "\n";
    for (const auto& c : el.children) write(out, c, indent + 1);
    out += pad;
  }
  out += "</" + el.name + ">\n";
}

inline std::string to_string(const Element& el) {
  std::string out;
  write(out, el);
  return out;
}

}  // namespace cordiet::xml
