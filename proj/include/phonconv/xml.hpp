/*
 * Copyright 2026 The phonconv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Minimal XML document tree built on top of expat. Keeps element positions
// for diagnostics and the order of mixed text/element content.

#pragma once

#include <phonconv/error.hpp>

#include <expat.h>

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace phonconv::xml {

struct Element;

/// Either a text run or a child element.
struct Node {
  std::string text;
  std::unique_ptr<Element> element;

  bool is_element() const noexcept { return element != nullptr; }
};

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Node> children;
  std::size_t line = 0;
  std::size_t column = 0;

  std::optional<std::string> attribute(const std::string& key) const {
    for (const auto& [k, v] : attributes)
      if (k == key) return v;
    return std::nullopt;
  }
};

namespace detail {

struct Builder {
  XML_Parser parser = nullptr;
  std::unique_ptr<Element> root;
  std::vector<Element*> stack;

  static void on_start(void* data, const XML_Char* name, const XML_Char** attrs) {
    auto* self = static_cast<Builder*>(data);
    auto el = std::make_unique<Element>();
    el->name = name;
    el->line = XML_GetCurrentLineNumber(self->parser);
    el->column = XML_GetCurrentColumnNumber(self->parser) + 1;
    for (std::size_t i = 0; attrs[i] != nullptr; i += 2) el->attributes.emplace_back(attrs[i], attrs[i + 1]);
    Element* raw = el.get();
    if (self->stack.empty()) {
      self->root = std::move(el);
    } else {
      Node node;
      node.element = std::move(el);
      self->stack.back()->children.push_back(std::move(node));
    }
    self->stack.push_back(raw);
  }

  static void on_end(void* data, const XML_Char*) { static_cast<Builder*>(data)->stack.pop_back(); }

  static void on_text(void* data, const XML_Char* s, int len) {
    auto* self = static_cast<Builder*>(data);
    if (self->stack.empty()) return;
    auto& children = self->stack.back()->children;
    if (children.empty() || children.back().is_element()) children.emplace_back();
    children.back().text.append(s, static_cast<std::size_t>(len));
  }
};

}  // namespace detail

/// Parses a complete UTF-8 document. Throws SyntaxError on malformed input.
inline std::unique_ptr<Element> parse(const std::string& source) {
  std::unique_ptr<std::remove_pointer_t<XML_Parser>, decltype(&XML_ParserFree)> parser(
      XML_ParserCreate("UTF-8"), &XML_ParserFree);
  if (!parser) throw Error(Errc::io_error, "cannot allocate XML parser");
  detail::Builder builder;
  builder.parser = parser.get();
  XML_SetUserData(parser.get(), &builder);
  XML_SetElementHandler(parser.get(), &detail::Builder::on_start, &detail::Builder::on_end);
  XML_SetCharacterDataHandler(parser.get(), &detail::Builder::on_text);
  if (XML_Parse(parser.get(), source.data(), static_cast<int>(source.size()), XML_TRUE) == XML_STATUS_ERROR) {
    throw SyntaxError(XML_GetCurrentLineNumber(parser.get()), XML_GetCurrentColumnNumber(parser.get()) + 1,
                      XML_ErrorString(XML_GetErrorCode(parser.get())));
  }
  return std::move(builder.root);
}

}  // namespace phonconv::xml
