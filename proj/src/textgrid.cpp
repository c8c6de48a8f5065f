// Copyright 2026 The stopburst Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "stopburst/textgrid.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "stopburst/error.hpp"
#include "stopburst/text_util.hpp"

namespace stopburst::textgrid {

const IntervalTier* TextGrid::find_tier(std::string_view name) const {
  for (const auto& tier : tiers) {
    if (tier.name == name) return &tier;
  }
  return nullptr;
}

IntervalTier* TextGrid::find_tier(std::string_view name) {
  for (auto& tier : tiers) {
    if (tier.name == name) return &tier;
  }
  return nullptr;
}

namespace {

void append_utf8(std::string& out, std::uint32_t cp) {
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

std::string utf16_to_utf8(std::string_view bytes, bool big_endian) {
  if (bytes.size() % 2 != 0) throw ParseError("UTF-16 input has an odd number of bytes", 0);
  auto unit = [&](std::size_t i) -> std::uint32_t {
    auto b0 = static_cast<unsigned char>(bytes[i]);
    auto b1 = static_cast<unsigned char>(bytes[i + 1]);
    return big_endian ? (b0 << 8) | b1 : (b1 << 8) | b0;
  };
  std::string out;
  out.reserve(bytes.size());
  int line = 1;
  for (std::size_t i = 0; i < bytes.size(); i += 2) {
    std::uint32_t u = unit(i);
    if (u >= 0xD800 && u <= 0xDBFF) {
      if (i + 3 >= bytes.size()) throw ParseError("truncated UTF-16 surrogate pair", line);
      std::uint32_t lo = unit(i + 2);
      if (lo < 0xDC00 || lo > 0xDFFF) throw ParseError("unpaired UTF-16 surrogate", line);
      u = 0x10000 + ((u - 0xD800) << 10) + (lo - 0xDC00);
      i += 2;
    } else if (u >= 0xDC00 && u <= 0xDFFF) {
      throw ParseError("unpaired UTF-16 surrogate", line);
    }
    if (u == '\n') ++line;
    append_utf8(out, u);
  }
  return out;
}

struct Token {
  std::string text;
  int line = 0;
  bool quoted = false;
};

// Splits the document into whitespace-separated words and quoted strings.
// A doubled quote inside a string is a literal quote; strings may span lines.
std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  int line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      ++line;
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '"') {
      Token tok{"", line, true};
      ++i;
      while (true) {
        if (i >= text.size()) throw ParseError("unterminated string", tok.line);
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            tok.text.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (text[i] == '\n') ++line;
        tok.text.push_back(text[i]);
        ++i;
      }
      tokens.push_back(std::move(tok));
      continue;
    }
    Token tok{"", line, false};
    while (i < text.size() && text[i] != ' ' && text[i] != '\t' && text[i] != '\r' &&
           text[i] != '\n' && text[i] != '"') {
      tok.text.push_back(text[i]);
      ++i;
    }
    tokens.push_back(std::move(tok));
  }
  return tokens;
}

class Reader {
 public:
  explicit Reader(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  bool done() const { return pos_ >= tokens_.size(); }
  int line() const { return done() ? (tokens_.empty() ? 1 : tokens_.back().line) : tokens_[pos_].line; }
  const Token* peek() const { return done() ? nullptr : &tokens_[pos_]; }

  const Token& take(std::string_view expecting) {
    if (done()) throw ParseError("unexpected end of file, expected " + std::string(expecting), line());
    return tokens_[pos_++];
  }

  void word(std::string_view w) {
    const Token& t = take("'" + std::string(w) + "'");
    if (t.quoted || t.text != w) {
      throw ParseError("expected '" + std::string(w) + "', found '" + t.text + "'", t.line);
    }
  }

  std::string string_value(std::string_view key) {
    key_eq(key);
    const Token& t = take("a quoted string");
    if (!t.quoted) throw ParseError("expected a quoted string for '" + std::string(key) + "'", t.line);
    return t.text;
  }

  double number_value(std::string_view key) {
    key_eq(key);
    const Token& t = take("a number");
    double v = 0.0;
    if (t.quoted || !parse_double(t.text, v)) {
      throw ParseError("expected a number for '" + std::string(key) + "', found '" + t.text + "'",
                       t.line);
    }
    return v;
  }

  long count_value(std::string_view key) {
    int at = line();
    double v = number_value(key);
    if (v < 0 || v != std::floor(v) || v > 1e9) {
      throw ParseError("expected a non-negative integer for '" + std::string(key) + "'", at);
    }
    return static_cast<long>(v);
  }

  // Matches "[k]:" (or "[]:" when index is nullopt).
  void index_marker(std::optional<long> index) {
    const Token& t = take("an index marker");
    std::string expect = index ? "[" + std::to_string(*index) + "]:" : "[]:";
    if (t.quoted || t.text != expect) {
      throw ParseError("expected '" + expect + "', found '" + t.text + "'", t.line);
    }
  }

 private:
  void key_eq(std::string_view key) {
    word(key);
    word("=");
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

bool same_time(double a, double b) { return std::abs(a - b) <= kBoundaryTolerance; }

// Shared by the parser (which knows line numbers) and validate().
template <typename LineOf>
void check_tier(const IntervalTier& tier, double xmin, double xmax, LineOf line_of,
                bool with_lines) {
  auto fail = [&](const std::string& msg, std::size_t idx) {
    std::string full = "tier '" + tier.name + "': " + msg;
    if (with_lines) throw ParseError(full, line_of(idx));
    throw ValidationError(full);
  };
  if (tier.intervals.empty()) fail("tier has no intervals", 0);
  for (std::size_t i = 0; i < tier.intervals.size(); ++i) {
    const auto& iv = tier.intervals[i];
    if (!(iv.xmin < iv.xmax)) {
      fail("interval " + std::to_string(i + 1) + " has xmin >= xmax", i);
    }
    if (i == 0) {
      if (!same_time(iv.xmin, xmin)) fail("first interval does not start at the tier xmin", i);
      continue;
    }
    double prev_end = tier.intervals[i - 1].xmax;
    if (iv.xmin < prev_end - kBoundaryTolerance) {
      fail("interval " + std::to_string(i + 1) + " starts at " + format_double(iv.xmin) +
               " before interval " + std::to_string(i) + " ends at " + format_double(prev_end) +
               " (overlapping or out of order)",
           i);
    }
    if (iv.xmin > prev_end + kBoundaryTolerance) {
      fail("gap between interval " + std::to_string(i) + " and " + std::to_string(i + 1), i);
    }
  }
  if (!same_time(tier.intervals.back().xmax, xmax)) {
    fail("last interval does not end at the tier xmax", tier.intervals.size() - 1);
  }
}

void write_string(std::ostringstream& out, const std::string& s) {
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

}  // namespace

std::string decode_text(std::string_view bytes) {
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xEF &&
      static_cast<unsigned char>(bytes[1]) == 0xBB && static_cast<unsigned char>(bytes[2]) == 0xBF) {
    bytes.remove_prefix(3);
  } else if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
             static_cast<unsigned char>(bytes[1]) == 0xFE) {
    return utf16_to_utf8(bytes.substr(2), false);
  } else if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFE &&
             static_cast<unsigned char>(bytes[1]) == 0xFF) {
    return utf16_to_utf8(bytes.substr(2), true);
  }
  if (!is_valid_utf8(bytes)) {
    throw ParseError("input is not valid UTF-8 and carries no byte order mark", 0);
  }
  return std::string(bytes);
}

TextGrid parse_textgrid(std::string_view bytes) {
  std::string text = decode_text(bytes);
  if (text.rfind("ooBinaryFile", 0) == 0) {
    throw ParseError("binary TextGrid files are not supported; save as a text file", 1);
  }
  Reader in(tokenize(text));
  in.word("File");
  if (in.string_value("type") != "ooTextFile") {
    throw ParseError("not a Praat text file (File type must be \"ooTextFile\")", in.line());
  }
  in.word("Object");
  if (std::string cls = in.string_value("class"); cls != "TextGrid") {
    throw ParseError("object class is \"" + cls + "\", expected \"TextGrid\"", in.line());
  }
  if (const Token* t = in.peek(); t != nullptr && t->text != "xmin") {
    double ignored = 0.0;
    if (!t->quoted && parse_double(t->text, ignored)) {
      throw ParseError("short text format is not supported; save in long text format", t->line);
    }
  }

  TextGrid grid;
  int header_line = in.line();
  grid.xmin = in.number_value("xmin");
  grid.xmax = in.number_value("xmax");
  if (!(grid.xmin < grid.xmax)) throw ParseError("TextGrid xmin must be less than xmax", header_line);

  const Token& flag = in.take("'tiers?'");
  if (flag.text != "tiers?") throw ParseError("expected 'tiers?', found '" + flag.text + "'", flag.line);
  const Token& exists = in.take("<exists> or <absent>");
  if (exists.text == "<absent>") {
    if (!in.done()) throw ParseError("content after a TextGrid with no tiers", in.line());
    return grid;
  }
  if (exists.text != "<exists>") {
    throw ParseError("expected <exists> or <absent>, found '" + exists.text + "'", exists.line);
  }
  long n_tiers = in.count_value("size");
  in.word("item");
  in.index_marker(std::nullopt);

  for (long k = 1; k <= n_tiers; ++k) {
    if (in.done()) {
      throw ParseError("tier count mismatch: header declares " + std::to_string(n_tiers) +
                           " tiers, file contains " + std::to_string(k - 1),
                       in.line());
    }
    in.word("item");
    in.index_marker(k);
    int class_line = in.line();
    std::string cls = in.string_value("class");
    if (cls == "TextTier") {
      throw ParseError("point tiers (TextTier) are not supported", class_line);
    }
    if (cls != "IntervalTier") throw ParseError("unknown tier class \"" + cls + "\"", class_line);
    IntervalTier tier;
    tier.name = in.string_value("name");
    int span_line = in.line();
    double txmin = in.number_value("xmin");
    double txmax = in.number_value("xmax");
    if (!same_time(txmin, grid.xmin) || !same_time(txmax, grid.xmax)) {
      throw ParseError("tier '" + tier.name + "' span differs from the TextGrid span", span_line);
    }
    in.word("intervals:");
    long n_intervals = in.count_value("size");
    std::vector<int> lines;
    lines.reserve(static_cast<std::size_t>(n_intervals));
    for (long j = 1; j <= n_intervals; ++j) {
      if (in.done()) {
        throw ParseError("tier '" + tier.name + "': interval count mismatch, declared " +
                             std::to_string(n_intervals) + ", found " + std::to_string(j - 1),
                         in.line());
      }
      const Token* next = in.peek();
      if (next->text == "item") {
        throw ParseError("tier '" + tier.name + "': interval count mismatch, declared " +
                             std::to_string(n_intervals) + ", found " + std::to_string(j - 1),
                         next->line);
      }
      in.word("intervals");
      in.index_marker(j);
      Interval iv;
      lines.push_back(in.line());
      iv.xmin = in.number_value("xmin");
      iv.xmax = in.number_value("xmax");
      iv.text = in.string_value("text");
      tier.intervals.push_back(std::move(iv));
    }
    check_tier(tier, grid.xmin, grid.xmax, [&](std::size_t i) { return lines.empty() ? span_line : lines[i]; },
               true);
    grid.tiers.push_back(std::move(tier));
  }
  if (!in.done()) {
    const Token* t = in.peek();
    if (t->text == "item") {
      throw ParseError("tier count mismatch: header declares " + std::to_string(n_tiers) +
                           " tiers, file contains more",
                       t->line);
    }
    if (t->text == "intervals") {
      throw ParseError("interval count mismatch: more intervals than declared", t->line);
    }
    throw ParseError("unexpected content '" + t->text + "' after the last tier", t->line);
  }
  return grid;
}

TextGrid read_textgrid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open TextGrid " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_textgrid(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e);
  }
}

void validate(const TextGrid& grid) {
  if (!std::isfinite(grid.xmin) || !std::isfinite(grid.xmax) || !(grid.xmin < grid.xmax)) {
    throw ValidationError("TextGrid xmin must be less than xmax");
  }
  for (const auto& tier : grid.tiers) {
    check_tier(tier, grid.xmin, grid.xmax, [](std::size_t) { return 0; }, false);
  }
}

std::string serialize_textgrid(const TextGrid& grid) {
  validate(grid);
  std::ostringstream out;
  out << "File type = \"ooTextFile\"\n"
         "Object class = \"TextGrid\"\n\n";
  out << "xmin = " << format_double(grid.xmin) << " \n";
  out << "xmax = " << format_double(grid.xmax) << " \n";
  if (grid.tiers.empty()) {
    out << "tiers? <absent> \n";
    return out.str();
  }
  out << "tiers? <exists> \n";
  out << "size = " << grid.tiers.size() << " \n";
  out << "item []: \n";
  for (std::size_t k = 0; k < grid.tiers.size(); ++k) {
    const auto& tier = grid.tiers[k];
    out << "    item [" << k + 1 << "]:\n";
    out << "        class = \"IntervalTier\" \n";
    out << "        name = ";
    write_string(out, tier.name);
    out << " \n";
    out << "        xmin = " << format_double(grid.xmin) << " \n";
    out << "        xmax = " << format_double(grid.xmax) << " \n";
    out << "        intervals: size = " << tier.intervals.size() << " \n";
    for (std::size_t j = 0; j < tier.intervals.size(); ++j) {
      const auto& iv = tier.intervals[j];
      out << "        intervals [" << j + 1 << "]:\n";
      out << "            xmin = " << format_double(iv.xmin) << " \n";
      out << "            xmax = " << format_double(iv.xmax) << " \n";
      out << "            text = ";
      write_string(out, iv.text);
      out << " \n";
    }
  }
  return out.str();
}

void write_textgrid(const std::filesystem::path& path, const TextGrid& grid) {
  std::string text = serialize_textgrid(grid);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace stopburst::textgrid
