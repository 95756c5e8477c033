#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace voila::annotation {

// A `<Qn>...</Qn>` region; offsets index the tag-free text, end exclusive.
struct TaggedSpan {
  int tag_number = 0;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
  std::string text;

  bool operator==(const TaggedSpan&) const = default;
};

struct MarkedText {
  std::string clean_text;
  std::vector<TaggedSpan> spans;  // in order of appearance
};

// Strips `<Qn>`/`</Qn>` tags. Throws ParseError on an unclosed, crossing,
// nested, mismatched, duplicated or unnumbered tag. Any other '<' is text.
MarkedText parse_markers(std::string_view annotated);

// Inverse of parse_markers for non-overlapping spans sorted by offset.
std::string render_markers(std::string_view clean_text, const std::vector<TaggedSpan>& spans);

// Leading `<Qn>` / `<Q>` of a generated question. tag_number is 0 for `<Q>`
// or a missing tag.
struct QuestionTag {
  int tag_number = 0;
  std::string text;
};

QuestionTag split_question_tag(std::string_view question);

}  // namespace voila::annotation
