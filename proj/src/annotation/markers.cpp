#include "voila/annotation/markers.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>

#include "voila/error.hpp"

namespace voila::annotation {

namespace {

struct Tag {
  bool closing = false;
  std::optional<int> number;  // empty for a bare <Q>
  std::size_t length = 0;     // bytes consumed
};

// Recognizes <Qn>, </Qn> and <Q> at `pos`; anything else is not a tag.
std::optional<Tag> read_tag(std::string_view s, std::size_t pos) {
  if (s[pos] != '<') return std::nullopt;
  std::size_t i = pos + 1;
  Tag tag;
  if (i < s.size() && s[i] == '/') {
    tag.closing = true;
    ++i;
  }
  if (i >= s.size() || s[i] != 'Q') return std::nullopt;
  ++i;
  const std::size_t digits_start = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i >= s.size() || s[i] != '>') return std::nullopt;
  if (i > digits_start) {
    if (i - digits_start > 6) return std::nullopt;
    tag.number = std::stoi(std::string(s.substr(digits_start, i - digits_start)));
  }
  tag.length = i + 1 - pos;
  return tag;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

MarkedText parse_markers(std::string_view annotated) {
  MarkedText out;
  out.clean_text.reserve(annotated.size());
  std::optional<TaggedSpan> open;
  std::size_t open_at = 0;
  std::set<int> seen;

  for (std::size_t pos = 0; pos < annotated.size();) {
    const auto tag = read_tag(annotated, pos);
    if (!tag) {
      out.clean_text.push_back(annotated[pos++]);
      continue;
    }
    if (!tag->number) throw ParseError("marker without a tag number", pos);
    const int n = *tag->number;
    if (n < 1) throw ParseError("marker numbers start at 1, got " + std::to_string(n), pos);
    if (!tag->closing) {
      if (open) {
        throw ParseError("<Q" + std::to_string(n) + "> opened inside unclosed <Q" +
                             std::to_string(open->tag_number) + "> from offset " +
                             std::to_string(open_at),
                         pos);
      }
      if (!seen.insert(n).second) throw ParseError("duplicate marker <Q" + std::to_string(n) + ">", pos);
      open = TaggedSpan{n, out.clean_text.size(), 0, {}};
      open_at = pos;
    } else {
      if (!open) throw ParseError("</Q" + std::to_string(n) + "> without an open marker", pos);
      if (open->tag_number != n) {
        throw ParseError("</Q" + std::to_string(n) + "> closes <Q" +
                             std::to_string(open->tag_number) + ">",
                         pos);
      }
      open->char_end = out.clean_text.size();
      open->text = out.clean_text.substr(open->char_start, open->char_end - open->char_start);
      out.spans.push_back(std::move(*open));
      open.reset();
    }
    pos += tag->length;
  }
  if (open) {
    throw ParseError("<Q" + std::to_string(open->tag_number) + "> is never closed", open_at);
  }
  return out;
}

std::string render_markers(std::string_view clean_text, const std::vector<TaggedSpan>& spans) {
  std::string out;
  std::size_t cursor = 0;
  for (const auto& s : spans) {
    if (s.char_start < cursor || s.char_end < s.char_start || s.char_end > clean_text.size()) {
      throw RangeError("render_markers: span <Q" + std::to_string(s.tag_number) +
                       "> is out of order or out of range");
    }
    const std::string n = std::to_string(s.tag_number);
    out.append(clean_text.substr(cursor, s.char_start - cursor));
    out.append("<Q" + n + ">");
    out.append(clean_text.substr(s.char_start, s.char_end - s.char_start));
    out.append("</Q" + n + ">");
    cursor = s.char_end;
  }
  out.append(clean_text.substr(cursor));
  return out;
}

QuestionTag split_question_tag(std::string_view question) {
  const std::string q = trim(question);
  if (!q.empty()) {
    if (const auto tag = read_tag(q, 0); tag && !tag->closing) {
      return {tag->number.value_or(0), trim(std::string_view(q).substr(tag->length))};
    }
  }
  return {0, q};
}

}  // namespace voila::annotation
