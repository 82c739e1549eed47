#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bendlab/model.hpp"
#include "bendlab/rational.hpp"

// Text tablature format, line oriented, `#` starts a comment to end of line:
//
//   file      := "tab v1" NL stmt*
//   stmt      := trackdecl | tuning | ts | key | measure
//   trackdecl := "track" QUOTED_NAME
//   tuning    := "tuning" INT INT INT INT INT INT        midi, string 1 first
//   ts        := "ts" INT "/" INT
//   key       := "key" SIGNED_INT                        accidentals, -7..7
//   measure   := "|" item*
//   item      := event | rest
//   rest      := "r*" dur
//   event     := atoms "*" dur tie?
//   atoms     := note | "(" note (WS note)+ ")"          parenthesized = chord
//   note      := STRINGNO "." FRET bend?
//   bend      := "{" kindtok (":" payload)? "}"          {up} {held} {rel} {ud} {cx:pts}
//   kindtok   := "up" | "held" | "rel" | "ud" | "cx"
//   pts       := frac "/" INT ("," frac "/" INT)*        time_frac/offset_qt pairs
//   dur       := INT ("/" INT)?                          quarter lengths
//   tie       := "~"
//
// ts and key apply from the next measure onward. A bend token without an
// amplitude means 4 quarter tones ("full"). Measures must be filled exactly;
// rests are explicit.

namespace bendlab {

/// Parse failure, positioned. Text-format errors carry 1-based line/column;
/// structured-format errors carry a document path instead.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, int column, std::string message, std::string expected)
      : std::runtime_error(format(line, column, "", message, expected)),
        line_(line),
        column_(column),
        message_(std::move(message)),
        expected_(std::move(expected)) {}

  ParseError(std::string path, std::string message, std::string expected)
      : std::runtime_error(format(0, 0, path, message, expected)),
        line_(0),
        column_(0),
        message_(std::move(message)),
        expected_(std::move(expected)),
        path_(std::move(path)) {}

  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }
  const std::string& expected() const { return expected_; }
  const std::string& path() const { return path_; }

 private:
  static std::string format(int line, int column, const std::string& path,
                            const std::string& message, const std::string& expected) {
    std::ostringstream os;
    if (!path.empty())
      os << path << ": ";
    else
      os << "line " << line << ", column " << column << ": ";
    os << message;
    if (!expected.empty()) os << " (expected " << expected << ")";
    return os.str();
  }

  int line_;
  int column_;
  std::string message_;
  std::string expected_;
  std::string path_;
};

/// A well-formed document describing an impossible score (overlapping
/// events, bad tuning, ...). Distinct from ParseError so callers can tell
/// "could not read it" from "read it, but it breaks the rules".
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<Violation> violations)
      : std::runtime_error(describe(violations)), violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const { return violations_; }

 private:
  static std::string describe(const std::vector<Violation>& vs) {
    if (vs.empty()) return "invalid score";
    const Violation& v = vs.front();
    std::string s = v.rule + ": " + v.detail + " (track \"" + v.track + "\")";
    if (vs.size() > 1) s += " and " + std::to_string(vs.size() - 1) + " more";
    return s;
  }

  std::vector<Violation> violations_;
};

namespace tabio_detail {

inline std::string bend_kind_token(BendKind k) {
  switch (k) {
    case BendKind::basic: return "up";
    case BendKind::held: return "held";
    case BendKind::reverse: return "rel";
    case BendKind::up_down: return "ud";
    case BendKind::complex_shape: return "cx";
  }
  return "up";
}

inline std::string bend_kind_name(BendKind k) {
  switch (k) {
    case BendKind::basic: return "basic";
    case BendKind::held: return "held";
    case BendKind::reverse: return "reverse";
    case BendKind::up_down: return "up_down";
    case BendKind::complex_shape: return "complex";
  }
  return "basic";
}

inline std::optional<BendKind> bend_kind_from_name(const std::string& s) {
  if (s == "basic") return BendKind::basic;
  if (s == "held") return BendKind::held;
  if (s == "reverse") return BendKind::reverse;
  if (s == "up_down") return BendKind::up_down;
  if (s == "complex") return BendKind::complex_shape;
  return std::nullopt;
}

/// Character cursor over one source line.
struct Cursor {
  const std::string& text;
  int line_no;
  std::size_t pos = 0;

  bool at_end() const { return pos >= text.size() || text[pos] == '#'; }
  char peek() const { return at_end() ? '\0' : text[pos]; }
  int column() const { return static_cast<int>(pos) + 1; }

  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  }

  [[noreturn]] void fail(const std::string& message, const std::string& expected) const {
    throw ParseError(line_no, column(), message, expected);
  }

  char take() {
    if (at_end()) fail("unexpected end of line", "");
    return text[pos++];
  }

  void expect(char c, const std::string& what) {
    if (peek() != c) fail(std::string("unexpected '") + (at_end() ? std::string("end of line")
                                                                  : std::string(1, peek())) +
                              "'",
                          what);
    ++pos;
  }

  std::int64_t parse_uint(const std::string& what) {
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("not a number", what);
    std::int64_t v = 0;
    while (std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (take() - '0');
      if (v > 1'000'000'000) fail("number too large", what);
    }
    return v;
  }

  std::int64_t parse_int(const std::string& what) {
    bool neg = false;
    if (peek() == '-') {
      neg = true;
      ++pos;
    }
    std::int64_t v = parse_uint(what);
    return neg ? -v : v;
  }

  Rational parse_dur() {
    int col = column();
    std::int64_t p = parse_uint("duration");
    std::int64_t q = 1;
    if (peek() == '/') {
      ++pos;
      q = parse_uint("duration denominator");
      if (q == 0) throw ParseError(line_no, col, "zero denominator", "positive integer");
    }
    if (p == 0) throw ParseError(line_no, col, "zero duration", "positive duration");
    return Rational(p, q);
  }
};

struct TextParser {
  Score score;
  Track* track = nullptr;
  TimeSignature pending_ts;
  KeySignature pending_key;
  QL cursor_time{0};
  int measure_no = 0;  // 1-based within the current track
  bool saw_header = false;

  void start_track(const std::string& name) {
    score.tracks.push_back(Track{});
    track = &score.tracks.back();
    track->name = name;
    pending_ts = TimeSignature{4, 4};
    pending_key = KeySignature{0};
    cursor_time = QL(0);
    measure_no = 0;
  }

  void parse_line(const std::string& raw, int line_no) {
    Cursor c{raw, line_no};
    c.skip_ws();
    if (c.at_end()) return;

    if (!saw_header) {
      parse_header(c);
      saw_header = true;
      return;
    }

    if (c.peek() == '|') {
      parse_measure(c);
      return;
    }
    std::string word = parse_word(c);
    if (word == "track") {
      c.skip_ws();
      start_track(parse_quoted(c));
      ensure_line_done(c);
    } else if (word == "tuning") {
      parse_tuning(c);
    } else if (word == "ts") {
      parse_ts(c);
    } else if (word == "key") {
      parse_key(c);
    } else {
      c.fail("unknown statement \"" + word + "\"", "track, tuning, ts, key, or |");
    }
  }

  void parse_header(Cursor& c) {
    std::string w = parse_word(c);
    c.skip_ws();
    std::string v = parse_word(c);
    if (w != "tab" || v != "v1") c.fail("missing format header", "\"tab v1\"");
    ensure_line_done(c);
  }

  static std::string parse_word(Cursor& c) {
    std::string w;
    while (!c.at_end() && !std::isspace(static_cast<unsigned char>(c.peek()))) w += c.take();
    if (w.empty()) c.fail("empty statement", "a keyword");
    return w;
  }

  static std::string parse_quoted(Cursor& c) {
    c.expect('"', "quoted track name");
    std::string name;
    while (true) {
      if (c.at_end()) c.fail("unterminated track name", "closing '\"'");
      char ch = c.take();
      if (ch == '"') break;
      if (ch == '\\') {
        char esc = c.take();
        if (esc != '"' && esc != '\\') c.fail("bad escape in track name", "\\\" or \\\\");
        name += esc;
      } else {
        name += ch;
      }
    }
    return name;
  }

  void require_track(Cursor& c) {
    if (!track) c.fail("statement outside any track", "a preceding track declaration");
  }

  void ensure_line_done(Cursor& c) {
    c.skip_ws();
    if (!c.at_end()) c.fail("trailing content", "end of line");
  }

  void parse_tuning(Cursor& c) {
    require_track(c);
    if (measure_no > 0) c.fail("tuning change after the first measure", "tuning before measures");
    Tuning t;
    for (int i = 0; i < num_strings; ++i) {
      c.skip_ws();
      int col = c.column();
      std::int64_t midi = c.parse_int("midi pitch");
      if (midi < min_midi || midi > max_midi)
        throw ParseError(c.line_no, col, "midi pitch out of range", "0..127");
      t.open_midi[i] = static_cast<int>(midi);
    }
    if (!t.strictly_decreasing())
      c.fail("tuning not strictly decreasing", "string 1 highest to string 6 lowest");
    ensure_line_done(c);
    track->tuning = t;
  }

  void parse_ts(Cursor& c) {
    require_track(c);
    c.skip_ws();
    int col = c.column();
    std::int64_t num = c.parse_uint("time signature numerator");
    c.expect('/', "'/'");
    std::int64_t den = c.parse_uint("time signature denominator");
    if (num < 1 || num > 64) throw ParseError(c.line_no, col, "bad numerator", "1..64");
    if (den < 1 || den > 64 || (den & (den - 1)) != 0)
      throw ParseError(c.line_no, col, "bad denominator", "a power of two");
    ensure_line_done(c);
    pending_ts = TimeSignature{static_cast<int>(num), static_cast<int>(den)};
  }

  void parse_key(Cursor& c) {
    require_track(c);
    c.skip_ws();
    int col = c.column();
    std::int64_t acc = c.parse_int("accidental count");
    if (acc < -max_key_accidentals || acc > max_key_accidentals)
      throw ParseError(c.line_no, col, "accidentals out of range", "-7..7");
    ensure_line_done(c);
    pending_key = KeySignature{static_cast<int>(acc)};
  }

  void parse_measure(Cursor& c) {
    require_track(c);
    c.expect('|', "'|'");
    ++measure_no;
    Measure m{pending_ts, pending_key, cursor_time};
    track->measures.push_back(m);
    QL len = m.length();
    QL acc(0);

    while (true) {
      c.skip_ws();
      if (c.at_end()) break;
      int item_col = c.column();
      QL dur = parse_item(c, m.start + acc);
      acc += dur;
      if (acc > len)
        throw ParseError(c.line_no, item_col,
                         "measure " + std::to_string(measure_no) + " over-full: content sums to " +
                             acc.str() + " of " + len.str(),
                         "items summing to the measure length");
    }
    if (acc < len)
      c.fail("measure " + std::to_string(measure_no) + " under-full: content sums to " +
                 acc.str() + " of " + len.str(),
             "items summing to the measure length");
    cursor_time = m.start + len;
  }

  // Returns the item duration; events are appended to the current track.
  QL parse_item(Cursor& c, const QL& onset) {
    if (c.peek() == 'r') {
      ++c.pos;
      c.expect('*', "'*' after rest");
      return c.parse_dur();
    }
    NoteEvent ev;
    ev.onset = onset;
    if (c.peek() == '(') {
      ++c.pos;
      ev.notes.push_back(parse_note(c));
      while (true) {
        c.skip_ws();
        if (c.peek() == ')') {
          ++c.pos;
          break;
        }
        ev.notes.push_back(parse_note(c));
      }
      if (ev.notes.size() < 2) c.fail("chord with a single note", "two or more notes");
    } else {
      ev.notes.push_back(parse_note(c));
    }
    c.expect('*', "'*' before duration");
    ev.duration = c.parse_dur();
    if (c.peek() == '~') {
      ++c.pos;
      ev.tied_to_next = true;
    }

    std::sort(ev.notes.begin(), ev.notes.end(),
              [](const Note& a, const Note& b) { return a.string < b.string; });
    for (std::size_t i = 1; i < ev.notes.size(); ++i)
      if (ev.notes[i].string == ev.notes[i - 1].string)
        c.fail("two notes on string " + std::to_string(ev.notes[i].string), "distinct strings");
    track->events.push_back(std::move(ev));
    return track->events.back().duration;
  }

  Note parse_note(Cursor& c) {
    int col = c.column();
    std::int64_t string_no = c.parse_uint("string number");
    if (string_no < 1 || string_no > num_strings)
      throw ParseError(c.line_no, col, "string out of range", "1..6");
    c.expect('.', "'.' between string and fret");
    col = c.column();
    std::int64_t fret = c.parse_uint("fret number");
    if (fret > max_fret) throw ParseError(c.line_no, col, "fret out of range", "0..30");
    int midi = track->tuning.open_for_string(static_cast<int>(string_no)) + static_cast<int>(fret);
    if (midi > max_midi) throw ParseError(c.line_no, col, "pitch above midi 127", "a lower fret");

    Note n{static_cast<int>(string_no), static_cast<int>(fret), std::nullopt};
    if (c.peek() == '{') n.bend = parse_bend(c);
    return n;
  }

  BendAnnotation parse_bend(Cursor& c) {
    c.expect('{', "'{'");
    int col = c.column();
    std::string kind;
    while (std::isalpha(static_cast<unsigned char>(c.peek()))) kind += c.take();
    BendAnnotation b;
    if (kind == "up")
      b.kind = BendKind::basic;
    else if (kind == "held")
      b.kind = BendKind::held;
    else if (kind == "rel")
      b.kind = BendKind::reverse;
    else if (kind == "ud")
      b.kind = BendKind::up_down;
    else if (kind == "cx")
      b.kind = BendKind::complex_shape;
    else
      throw ParseError(c.line_no, col, "unknown bend kind \"" + kind + "\"",
                       "up, held, rel, ud, or cx");

    if (b.kind == BendKind::complex_shape) {
      c.expect(':', "':' then bend points");
      b.points = parse_bend_points(c);
      b.amplitude_qt = 0;
      for (const BendPoint& p : b.points) b.amplitude_qt = std::max(b.amplitude_qt, p.offset_qt);
      if (b.amplitude_qt < 1)
        throw ParseError(c.line_no, col, "complex bend never leaves offset 0",
                         "a point with positive offset");
    } else if (c.peek() == ':') {
      ++c.pos;
      col = c.column();
      std::int64_t amp = c.parse_uint("amplitude in quarter tones");
      if (amp < 1 || amp > 24) throw ParseError(c.line_no, col, "amplitude out of range", "1..24");
      b.amplitude_qt = static_cast<int>(amp);
    } else {
      b.amplitude_qt = 4;  // "full"
    }
    c.expect('}', "'}'");
    return b;
  }

  // Each point is frac "/" offset; the rightmost '/' splits them, so
  // "1/2/4" reads as time 1/2, offset 4.
  std::vector<BendPoint> parse_bend_points(Cursor& c) {
    std::vector<BendPoint> pts;
    while (true) {
      int col = c.column();
      std::string tok;
      while (!c.at_end() && c.peek() != ',' && c.peek() != '}') tok += c.take();
      std::size_t slash = tok.rfind('/');
      if (slash == std::string::npos || slash == 0 || slash + 1 == tok.size())
        throw ParseError(c.line_no, col, "bad bend point \"" + tok + "\"", "frac/offset");
      Rational frac;
      std::int64_t off;
      try {
        frac = Rational::parse(tok.substr(0, slash));
        off = std::stoll(tok.substr(slash + 1));
      } catch (const std::exception&) {
        throw ParseError(c.line_no, col, "bad bend point \"" + tok + "\"", "frac/offset");
      }
      if (frac.is_negative() || frac > Rational(1))
        throw ParseError(c.line_no, col, "bend point time outside [0,1]", "frac in 0..1");
      if (off < 0 || off > 24)
        throw ParseError(c.line_no, col, "bend point offset out of range", "0..24");
      if (!pts.empty() && !(pts.back().time_frac < frac))
        throw ParseError(c.line_no, col, "bend point times not increasing", "strictly increasing fracs");
      pts.push_back(BendPoint{frac, static_cast<int>(off)});
      if (c.peek() != ',') break;
      ++c.pos;
    }
    if (pts.size() < 2)
      c.fail("complex bend needs at least 2 points", "frac/offset,frac/offset,...");
    if (!(pts.front().time_frac == Rational(0)))
      c.fail("complex bend must start at time 0", "first point 0/...");
    if (!(pts.back().time_frac == Rational(1)))
      c.fail("complex bend must end at time 1", "last point 1/...");
    return pts;
  }
};

inline std::string escape_name(const std::string& name) {
  std::string out;
  for (char ch : name) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out;
}

inline std::string note_token(const Note& n) {
  std::string out = std::to_string(n.string) + "." + std::to_string(n.fret);
  if (n.bend) {
    const BendAnnotation& b = *n.bend;
    out += "{" + bend_kind_token(b.kind);
    if (b.kind == BendKind::complex_shape) {
      out += ":";
      for (std::size_t i = 0; i < b.points.size(); ++i) {
        if (i) out += ",";
        out += b.points[i].time_frac.str() + "/" + std::to_string(b.points[i].offset_qt);
      }
    } else {
      out += ":" + std::to_string(b.amplitude_qt);
    }
    out += "}";
  }
  return out;
}

inline std::string event_token(const NoteEvent& ev) {
  std::vector<Note> notes = ev.notes;
  std::sort(notes.begin(), notes.end(),
            [](const Note& a, const Note& b) { return a.string < b.string; });
  std::string out;
  if (notes.size() == 1) {
    out = note_token(notes[0]);
  } else {
    out = "(";
    for (std::size_t i = 0; i < notes.size(); ++i) {
      if (i) out += " ";
      out += note_token(notes[i]);
    }
    out += ")";
  }
  out += "*" + ev.duration.str();
  if (ev.tied_to_next) out += "~";
  return out;
}

}  // namespace tabio_detail

/// Parses the line-oriented text format. The returned score always satisfies
/// validate_score(score) == {} — anything else raises ParseError first.
inline Score parse_text(const std::string& source) {
  tabio_detail::TextParser p;
  std::string line;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= source.size()) {
    std::size_t nl = source.find('\n', pos);
    if (nl == std::string::npos) {
      line = source.substr(pos);
      pos = source.size() + 1;
    } else {
      line = source.substr(pos, nl - pos);
      pos = nl + 1;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    p.parse_line(line, line_no);
  }
  if (!p.saw_header) throw ParseError(1, 1, "empty input", "\"tab v1\"");
  return p.score;
}

/// Canonical text form: explicit tuning/ts/key directives, one measure per
/// line, rest tokens filling every gap, durations in lowest terms.
inline std::string serialize_text(const Score& score) {
  auto violations = validate_score(score);
  if (!violations.empty())
    throw std::domain_error("cannot serialize invalid score: " + violations.front().rule +
                            " (" + violations.front().detail + ")");

  std::ostringstream os;
  os << "tab v1\n";
  for (const Track& track : score.tracks) {
    os << "track \"" << tabio_detail::escape_name(track.name) << "\"\n";
    os << "tuning";
    for (int midi : track.tuning.open_midi) os << " " << midi;
    os << "\n";

    std::size_t next_event = 0;
    for (std::size_t mi = 0; mi < track.measures.size(); ++mi) {
      const Measure& m = track.measures[mi];
      bool ts_changed = mi == 0 || !(track.measures[mi - 1].time_sig == m.time_sig);
      bool key_changed = mi == 0 || !(track.measures[mi - 1].key_sig == m.key_sig);
      if (ts_changed) os << "ts " << m.time_sig.numerator << "/" << m.time_sig.denominator << "\n";
      if (key_changed) os << "key " << m.key_sig.accidentals << "\n";

      os << "|";
      QL at = m.start;
      QL end = m.end();
      while (next_event < track.events.size() && track.events[next_event].onset < end) {
        const NoteEvent& ev = track.events[next_event];
        if (ev.onset > at) os << " r*" << (ev.onset - at).str();
        os << " " << tabio_detail::event_token(ev);
        at = ev.onset + ev.duration;
        ++next_event;
      }
      if (at < end) os << " r*" << (end - at).str();
      os << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Structured format ("bendlab-score/1"): lossless JSON encoding of the model.
// ---------------------------------------------------------------------------

namespace tabio_detail {

using nlohmann::json;

inline const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline const json& require(const json& obj, const char* key, const std::string& path) {
  const json* v = find(obj, key);
  if (!v) throw ParseError(path, std::string("missing field \"") + key + "\"", key);
  return *v;
}

inline int require_int(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_number_integer())
    throw ParseError(path + "/" + key, "not an integer", "integer");
  return v.get<int>();
}

inline std::string require_str(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw ParseError(path + "/" + key, "not a string", "string");
  return v.get<std::string>();
}

inline Rational require_rational(const json& obj, const char* key, const std::string& path) {
  std::string s = require_str(obj, key, path);
  try {
    return Rational::parse(s);
  } catch (const std::exception&) {
    throw ParseError(path + "/" + key, "bad rational \"" + s + "\"", "\"p/q\"");
  }
}

inline BendAnnotation parse_bend_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "bend is not an object", "object");
  BendAnnotation b;
  std::string kind = require_str(j, "kind", path);
  auto k = bend_kind_from_name(kind);
  if (!k)
    throw ParseError(path + "/kind", "unknown bend kind \"" + kind + "\"",
                     "basic, held, reverse, up_down, or complex");
  b.kind = *k;
  b.amplitude_qt = require_int(j, "amplitude_qt", path);
  if (b.kind == BendKind::complex_shape) {
    const json& pts = require(j, "points", path);
    if (!pts.is_array()) throw ParseError(path + "/points", "not an array", "array");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::string ppath = path + "/points/" + std::to_string(i);
      if (!pts[i].is_object()) throw ParseError(ppath, "not an object", "object");
      BendPoint p;
      p.time_frac = require_rational(pts[i], "time", ppath);
      p.offset_qt = require_int(pts[i], "offset_qt", ppath);
      b.points.push_back(p);
    }
  } else if (find(j, "points")) {
    throw ParseError(path + "/points", "points on a non-complex bend", "no points field");
  }
  return b;
}

}  // namespace tabio_detail

/// Parses the structured JSON encoding. Schema errors name the document path.
inline Score parse_structured(const std::string& source) {
  using tabio_detail::json;
  json doc;
  try {
    doc = json::parse(source);
  } catch (const json::parse_error& e) {
    throw ParseError("(document)", e.what(), "well-formed JSON");
  }
  if (!doc.is_object()) throw ParseError("", "top level is not an object", "object");
  std::string fmt = tabio_detail::require_str(doc, "format", "");
  if (fmt != "bendlab-score/1")
    throw ParseError("/format", "unsupported format \"" + fmt + "\"", "bendlab-score/1");

  Score score;
  score.title = tabio_detail::require_str(doc, "title", "");
  const json& tracks = tabio_detail::require(doc, "tracks", "");
  if (!tracks.is_array()) throw ParseError("/tracks", "not an array", "array");

  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    std::string tpath = "/tracks/" + std::to_string(ti);
    const json& jt = tracks[ti];
    if (!jt.is_object()) throw ParseError(tpath, "not an object", "object");
    Track track;
    track.name = tabio_detail::require_str(jt, "name", tpath);

    const json& tuning = tabio_detail::require(jt, "tuning", tpath);
    if (!tuning.is_array() || tuning.size() != num_strings)
      throw ParseError(tpath + "/tuning", "needs exactly 6 midi values", "array of 6 integers");
    for (int i = 0; i < num_strings; ++i) {
      if (!tuning[static_cast<std::size_t>(i)].is_number_integer())
        throw ParseError(tpath + "/tuning/" + std::to_string(i), "not an integer", "integer");
      track.tuning.open_midi[i] = tuning[static_cast<std::size_t>(i)].get<int>();
    }

    int measure_count = tabio_detail::require_int(jt, "measure_count", tpath);
    if (measure_count < 0)
      throw ParseError(tpath + "/measure_count", "negative measure count", ">= 0");

    // Directives give the effective signatures from their measure onward.
    std::map<int, std::pair<std::optional<TimeSignature>, std::optional<KeySignature>>> dirs;
    const json& jdirs = tabio_detail::require(jt, "directives", tpath);
    if (!jdirs.is_array()) throw ParseError(tpath + "/directives", "not an array", "array");
    for (std::size_t di = 0; di < jdirs.size(); ++di) {
      std::string dpath = tpath + "/directives/" + std::to_string(di);
      const json& jd = jdirs[di];
      if (!jd.is_object()) throw ParseError(dpath, "not an object", "object");
      int at = tabio_detail::require_int(jd, "measure_index", dpath);
      if (at < 0 || at >= std::max(measure_count, 1))
        throw ParseError(dpath + "/measure_index", "measure index out of range",
                         "0.." + std::to_string(measure_count - 1));
      auto& slot = dirs[at];
      if (const json* ts = tabio_detail::find(jd, "ts")) {
        if (!ts->is_string()) throw ParseError(dpath + "/ts", "not a string", "\"n/d\"");
        std::string s = ts->get<std::string>();
        std::size_t slash = s.find('/');
        try {
          if (slash == std::string::npos) throw std::invalid_argument("no slash");
          int num = std::stoi(s.substr(0, slash));
          int den = std::stoi(s.substr(slash + 1));
          if (num < 1 || den < 1 || (den & (den - 1)) != 0) throw std::invalid_argument("bad");
          slot.first = TimeSignature{num, den};
        } catch (const std::exception&) {
          throw ParseError(dpath + "/ts", "bad time signature \"" + s + "\"", "\"n/d\"");
        }
      }
      if (const json* key = tabio_detail::find(jd, "key")) {
        if (!key->is_number_integer()) throw ParseError(dpath + "/key", "not an integer", "-7..7");
        int acc = key->get<int>();
        if (acc < -max_key_accidentals || acc > max_key_accidentals)
          throw ParseError(dpath + "/key", "accidentals out of range", "-7..7");
        slot.second = KeySignature{acc};
      }
    }

    TimeSignature ts{4, 4};
    KeySignature key{0};
    QL at(0);
    for (int mi = 0; mi < measure_count; ++mi) {
      auto it = dirs.find(mi);
      if (it != dirs.end()) {
        if (it->second.first) ts = *it->second.first;
        if (it->second.second) key = *it->second.second;
      }
      track.measures.push_back(Measure{ts, key, at});
      at += ts.measure_length();
    }

    const json& jevents = tabio_detail::require(jt, "events", tpath);
    if (!jevents.is_array()) throw ParseError(tpath + "/events", "not an array", "array");
    for (std::size_t ei = 0; ei < jevents.size(); ++ei) {
      std::string epath = tpath + "/events/" + std::to_string(ei);
      const json& je = jevents[ei];
      if (!je.is_object()) throw ParseError(epath, "not an object", "object");
      NoteEvent ev;
      ev.onset = tabio_detail::require_rational(je, "onset", epath);
      ev.duration = tabio_detail::require_rational(je, "duration", epath);
      if (const json* tie = tabio_detail::find(je, "tie")) {
        if (!tie->is_boolean()) throw ParseError(epath + "/tie", "not a boolean", "true or false");
        ev.tied_to_next = tie->get<bool>();
      }
      const json& jnotes = tabio_detail::require(je, "notes", epath);
      if (!jnotes.is_array() || jnotes.empty())
        throw ParseError(epath + "/notes", "needs at least one note", "non-empty array");
      for (std::size_t ni = 0; ni < jnotes.size(); ++ni) {
        std::string npath = epath + "/notes/" + std::to_string(ni);
        const json& jn = jnotes[ni];
        if (!jn.is_object()) throw ParseError(npath, "not an object", "object");
        Note n;
        n.string = tabio_detail::require_int(jn, "string", npath);
        n.fret = tabio_detail::require_int(jn, "fret", npath);
        if (const json* jb = tabio_detail::find(jn, "bend"))
          n.bend = tabio_detail::parse_bend_json(*jb, npath + "/bend");
        ev.notes.push_back(std::move(n));
      }
      std::sort(ev.notes.begin(), ev.notes.end(),
                [](const Note& a, const Note& b) { return a.string < b.string; });
      track.events.push_back(std::move(ev));
    }
    score.tracks.push_back(std::move(track));
  }

  auto violations = validate_score(score);
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return score;
}

/// Lossless JSON encoding; round-trips exactly, including rationals.
inline std::string serialize_structured(const Score& score) {
  using tabio_detail::json;
  auto violations = validate_score(score);
  if (!violations.empty())
    throw std::domain_error("cannot serialize invalid score: " + violations.front().rule +
                            " (" + violations.front().detail + ")");

  json doc;
  doc["format"] = "bendlab-score/1";
  doc["title"] = score.title;
  doc["tracks"] = json::array();
  for (const Track& track : score.tracks) {
    json jt;
    jt["name"] = track.name;
    jt["tuning"] = track.tuning.open_midi;
    jt["measure_count"] = static_cast<int>(track.measures.size());

    json dirs = json::array();
    for (std::size_t mi = 0; mi < track.measures.size(); ++mi) {
      const Measure& m = track.measures[mi];
      bool ts_changed = mi == 0 || !(track.measures[mi - 1].time_sig == m.time_sig);
      bool key_changed = mi == 0 || !(track.measures[mi - 1].key_sig == m.key_sig);
      if (!ts_changed && !key_changed) continue;
      json jd;
      jd["measure_index"] = static_cast<int>(mi);
      if (ts_changed)
        jd["ts"] = std::to_string(m.time_sig.numerator) + "/" +
                   std::to_string(m.time_sig.denominator);
      if (key_changed) jd["key"] = m.key_sig.accidentals;
      dirs.push_back(std::move(jd));
    }
    jt["directives"] = std::move(dirs);

    json jevents = json::array();
    for (const NoteEvent& ev : track.events) {
      json je;
      je["onset"] = ev.onset.str();
      je["duration"] = ev.duration.str();
      je["tie"] = ev.tied_to_next;
      json jnotes = json::array();
      std::vector<Note> notes = ev.notes;
      std::sort(notes.begin(), notes.end(),
                [](const Note& a, const Note& b) { return a.string < b.string; });
      for (const Note& n : notes) {
        json jn;
        jn["string"] = n.string;
        jn["fret"] = n.fret;
        if (n.bend) {
          json jb;
          jb["kind"] = tabio_detail::bend_kind_name(n.bend->kind);
          jb["amplitude_qt"] = n.bend->amplitude_qt;
          if (n.bend->kind == BendKind::complex_shape) {
            json pts = json::array();
            for (const BendPoint& p : n.bend->points) {
              json jp;
              jp["time"] = p.time_frac.str();
              jp["offset_qt"] = p.offset_qt;
              pts.push_back(std::move(jp));
            }
            jb["points"] = std::move(pts);
          }
          jn["bend"] = std::move(jb);
        }
        jnotes.push_back(std::move(jn));
      }
      je["notes"] = std::move(jnotes);
      jevents.push_back(std::move(je));
    }
    jt["events"] = std::move(jevents);
    doc["tracks"].push_back(std::move(jt));
  }
  return doc.dump(2) + "\n";
}

/// Content sniffing for the two interchange formats.
enum class TabFormat { text, structured };

inline TabFormat detect_format(const std::string& source) {
  for (char ch : source) {
    if (std::isspace(static_cast<unsigned char>(ch))) continue;
    return ch == '{' ? TabFormat::structured : TabFormat::text;
  }
  return TabFormat::text;
}

inline Score parse_any(const std::string& source, std::optional<TabFormat> forced = std::nullopt) {
  TabFormat f = forced ? *forced : detect_format(source);
  return f == TabFormat::structured ? parse_structured(source) : parse_text(source);
}

inline std::string serialize_any(const Score& score, TabFormat format) {
  return format == TabFormat::structured ? serialize_structured(score) : serialize_text(score);
}

}  // namespace bendlab
