#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bendlab/bendsem.hpp"
#include "bendlab/model.hpp"
#include "bendlab/rational.hpp"

// Per-event feature vectors. Every simplified event yields 33 numbers
// describing the event itself plus up to two neighbours on each side.
// Neighbour lookups never cross a silence of a full measure or more; a
// missing neighbour contributes 0 and raises the matching "missing" flag.

namespace bendlab {

// ---------------------------------------------------------------------------
// Metrical strength
// ---------------------------------------------------------------------------

/// The grid spacings of the metrical hierarchy, widest first: the measure,
/// then its natural grouping levels, then binary subdivision down to a
/// thirty-second note (1/8 quarter length). Compound numerators (divisible
/// by 3, above 3) group into dotted beats and then pulses; even numerators
/// halve; odd numerators fall straight to the beat.
inline std::vector<QL> metrical_grids(const TimeSignature& ts) {
  std::vector<QL> levels;
  levels.push_back(ts.measure_length());
  QL beat = ts.beat_unit();
  if (ts.numerator > 3 && ts.numerator % 3 == 0) {
    levels.push_back(QL(3) * beat);
    levels.push_back(beat);
  } else if (ts.numerator % 2 == 0) {
    int group = ts.numerator;
    while (group % 2 == 0) {
      group /= 2;
      levels.push_back(QL(group) * beat);
    }
  } else {
    levels.push_back(beat);
  }
  QL finest = levels.back();
  while (finest > QL(1, 8)) {
    finest = finest / QL(2);
    levels.push_back(finest);
  }
  // Collapse equal neighbours (numerator 1 repeats the measure as its beat).
  std::vector<QL> out;
  for (const QL& g : levels)
    if (out.empty() || !(out.back() == g)) out.push_back(g);
  return out;
}

/// Strength 2^(-d) where d is the shallowest grid level containing the
/// offset; positions on no grid fall one level below the finest. The
/// downbeat is 1.0; in 4/4 the half-measure is 0.5, beats 2 and 4 are
/// 0.25, eighth offbeats 0.125.
inline double beat_strength(const QL& measure_offset, const TimeSignature& ts) {
  if (measure_offset.is_negative() || !(measure_offset < ts.measure_length()))
    throw std::domain_error("offset outside the measure");
  std::vector<QL> levels = metrical_grids(ts);
  for (std::size_t d = 0; d < levels.size(); ++d)
    if (measure_offset.is_multiple_of(levels[d])) return std::ldexp(1.0, -static_cast<int>(d));
  return std::ldexp(1.0, -static_cast<int>(levels.size()));
}

// ---------------------------------------------------------------------------
// Key-relative pitch class
// ---------------------------------------------------------------------------

/// Pitch class of the minor root implied by a key signature: no accidentals
/// is A (9), each sharp steps a fifth up, each flat a fifth down. One sharp
/// gives E (4).
inline int scale_root(int accidentals) {
  if (accidentals < -max_key_accidentals || accidentals > max_key_accidentals)
    throw std::domain_error("accidentals out of range");
  return ((7 * accidentals + 9) % 12 + 12) % 12;
}

/// Scale degree as a chromatic distance 0..11 above the root, so in a
/// one-sharp signature (root E) midi 69 (A) maps to 5.
inline int pitch_class_wrt_root(int midi, int accidentals) {
  if (midi < min_midi || midi > max_midi) throw std::domain_error("midi out of range");
  return ((midi % 12) - scale_root(accidentals) + 12) % 12;
}

// ---------------------------------------------------------------------------
// Feature registry
// ---------------------------------------------------------------------------

constexpr std::size_t num_features = 33;

using FeatureVector = std::array<double, num_features>;

/// How a dimension behaves under interpolation: continuous values stay as
/// computed, boolean and integer dimensions are rounded back to the grid
/// when synthetic samples are made.
enum class ValueKind { continuous, boolean, integer };

struct FeatureInfo {
  const char* name;
  ValueKind kind;
  double min = 0;  // integer dimensions only
  double max = 0;
};

/// Fixed layout of the 33 dimensions; dump columns, model metadata, and
/// split thresholds all refer to these indices.
inline const std::array<FeatureInfo, num_features>& feature_registry() {
  static const std::array<FeatureInfo, num_features> registry = {{
      {"duration", ValueKind::continuous},
      {"beat_strength", ValueKind::continuous},
      {"longer_than_prev", ValueKind::boolean},
      {"shorter_than_prev", ValueKind::boolean},
      {"same_duration_as_prev", ValueKind::boolean},
      {"num_notes", ValueKind::integer, 1, 6},
      {"avg_pitch_prev2", ValueKind::continuous},
      {"avg_pitch_prev1", ValueKind::continuous},
      {"avg_pitch", ValueKind::continuous},
      {"avg_pitch_next1", ValueKind::continuous},
      {"avg_pitch_next2", ValueKind::continuous},
      {"pitch_jump_from_prev2", ValueKind::continuous},
      {"pitch_jump_from_prev1", ValueKind::continuous},
      {"pitch_jump_to_next1", ValueKind::continuous},
      {"pitch_jump_to_next2", ValueKind::continuous},
      {"key_accidentals", ValueKind::integer, -7, 7},
      {"pitch_class_wrt_root", ValueKind::integer, 0, 11},
      {"avg_fret_prev2", ValueKind::continuous},
      {"avg_fret_prev1", ValueKind::continuous},
      {"avg_fret_next1", ValueKind::continuous},
      {"avg_fret_next2", ValueKind::continuous},
      {"avg_string_prev2", ValueKind::continuous},
      {"avg_string_prev1", ValueKind::continuous},
      {"avg_string_next1", ValueKind::continuous},
      {"avg_string_next2", ValueKind::continuous},
      {"fret_jump_prev", ValueKind::continuous},
      {"fret_jump_next", ValueKind::continuous},
      {"string_jump_prev", ValueKind::continuous},
      {"string_jump_next", ValueKind::continuous},
      {"missing_prev2", ValueKind::boolean},
      {"missing_prev1", ValueKind::boolean},
      {"missing_next1", ValueKind::boolean},
      {"missing_next2", ValueKind::boolean},
  }};
  return registry;
}

/// One extracted sample: the vector plus enough identity to trace it back.
struct FeatureRecord {
  std::string track_id;
  std::size_t event_index = 0;
  FeatureVector values{};
  Label label = Label::none;

  bool operator==(const FeatureRecord&) const = default;
};

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

namespace featex_detail {

/// Round half up, as in 66.5 -> 67.
inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

/// Mean fret and string over the fretted (fret > 0) notes of an event;
/// open-string-only events have no fretted position at all.
inline std::optional<std::pair<double, double>> fretted_position(const LabeledEvent& ev) {
  double fret_sum = 0, string_sum = 0;
  int count = 0;
  for (const auto& [string_no, fret] : ev.strings_frets) {
    if (fret == 0) continue;
    fret_sum += fret;
    string_sum += string_no;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return std::make_pair(fret_sum / count, string_sum / count);
}

/// Splits an event sequence into runs of continuity: a change of track or a
/// rest of one full measure or more (by the earlier event's meter) starts a
/// new run.
inline std::vector<std::size_t> run_ids(const std::vector<LabeledEvent>& events) {
  std::vector<std::size_t> ids(events.size(), 0);
  std::size_t run = 0;
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].track_id != events[i - 1].track_id) {
      ids[i] = ++run;
      continue;
    }
    QL gap = events[i].onset - (events[i - 1].onset + events[i - 1].duration);
    if (!(gap < events[i - 1].time_sig.measure_length())) ++run;
    ids[i] = run;
  }
  return ids;
}

}  // namespace featex_detail

/// Feature vectors for one track's simplified events, in event order.
inline std::vector<FeatureRecord> extract_features(const std::vector<LabeledEvent>& events) {
  std::vector<std::size_t> runs = featex_detail::run_ids(events);
  std::vector<FeatureRecord> out;
  out.reserve(events.size());

  auto neighbour = [&](std::size_t i, int delta) -> const LabeledEvent* {
    std::int64_t j = static_cast<std::int64_t>(i) + delta;
    if (j < 0 || j >= static_cast<std::int64_t>(events.size())) return nullptr;
    if (runs[static_cast<std::size_t>(j)] != runs[i]) return nullptr;
    return &events[static_cast<std::size_t>(j)];
  };

  for (std::size_t i = 0; i < events.size(); ++i) {
    const LabeledEvent& ev = events[i];
    const LabeledEvent* prev2 = neighbour(i, -2);
    const LabeledEvent* prev1 = neighbour(i, -1);
    const LabeledEvent* next1 = neighbour(i, +1);
    const LabeledEvent* next2 = neighbour(i, +2);

    FeatureRecord rec;
    rec.track_id = ev.track_id;
    rec.event_index = ev.event_index;
    rec.label = ev.label;
    FeatureVector& v = rec.values;

    v[0] = ev.duration.to_double();
    v[1] = beat_strength(ev.measure_offset, ev.time_sig);
    v[2] = prev1 && ev.duration > prev1->duration ? 1.0 : 0.0;
    v[3] = prev1 && ev.duration < prev1->duration ? 1.0 : 0.0;
    v[4] = prev1 && ev.duration == prev1->duration ? 1.0 : 0.0;
    v[5] = static_cast<double>(ev.arrival_midis.size());

    double own_pitch = mean_arrival(ev);
    auto pitch_or_zero = [](const LabeledEvent* e) { return e ? mean_arrival(*e) : 0.0; };
    v[6] = pitch_or_zero(prev2);
    v[7] = pitch_or_zero(prev1);
    v[8] = own_pitch;
    v[9] = pitch_or_zero(next1);
    v[10] = pitch_or_zero(next2);
    v[11] = prev2 ? own_pitch - mean_arrival(*prev2) : 0.0;
    v[12] = prev1 ? own_pitch - mean_arrival(*prev1) : 0.0;
    v[13] = next1 ? mean_arrival(*next1) - own_pitch : 0.0;
    v[14] = next2 ? mean_arrival(*next2) - own_pitch : 0.0;

    v[15] = static_cast<double>(ev.key_sig.accidentals);
    v[16] = static_cast<double>(pitch_class_wrt_root(featex_detail::round_half_up(own_pitch),
                                                     ev.key_sig.accidentals));

    auto pos = [&](const LabeledEvent* e) {
      return e ? featex_detail::fretted_position(*e) : std::nullopt;
    };
    auto p_prev2 = pos(prev2), p_prev1 = pos(prev1), p_next1 = pos(next1), p_next2 = pos(next2);
    v[17] = p_prev2 ? p_prev2->first : 0.0;
    v[18] = p_prev1 ? p_prev1->first : 0.0;
    v[19] = p_next1 ? p_next1->first : 0.0;
    v[20] = p_next2 ? p_next2->first : 0.0;
    v[21] = p_prev2 ? p_prev2->second : 0.0;
    v[22] = p_prev1 ? p_prev1->second : 0.0;
    v[23] = p_next1 ? p_next1->second : 0.0;
    v[24] = p_next2 ? p_next2->second : 0.0;
    v[25] = p_prev2 && p_prev1 ? p_prev1->first - p_prev2->first : 0.0;
    v[26] = p_next1 && p_next2 ? p_next2->first - p_next1->first : 0.0;
    v[27] = p_prev2 && p_prev1 ? p_prev1->second - p_prev2->second : 0.0;
    v[28] = p_next1 && p_next2 ? p_next2->second - p_next1->second : 0.0;

    v[29] = prev2 ? 0.0 : 1.0;
    v[30] = prev1 ? 0.0 : 1.0;
    v[31] = next1 ? 0.0 : 1.0;
    v[32] = next2 ? 0.0 : 1.0;

    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dump format (tab-separated, one record per line)
// ---------------------------------------------------------------------------

/// Malformed feature dump. Carries the 1-based line of the offence.
class DumpError : public std::runtime_error {
 public:
  DumpError(int line, const std::string& message)
      : std::runtime_error("dump line " + std::to_string(line) + ": " + message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace featex_detail {

/// Shortest decimal text that parses back to exactly the same double, so
/// dumps and reports are both readable and lossless.
inline std::string fmt_g(double x) {
  char buf[40];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t tab = line.find('\t', pos);
    if (tab == std::string::npos) {
      out.push_back(line.substr(pos));
      return out;
    }
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
}

}  // namespace featex_detail

inline void write_dump(const std::vector<FeatureRecord>& records, std::ostream& os) {
  os << "track_id\tevent_index";
  for (const FeatureInfo& f : feature_registry()) os << "\t" << f.name;
  os << "\tlabel\n";
  for (const FeatureRecord& r : records) {
    os << r.track_id << "\t" << r.event_index;
    for (double v : r.values) os << "\t" << featex_detail::fmt_g(v);
    os << "\t" << label_code(r.label) << "\n";
  }
}

inline std::string serialize_dump(const std::vector<FeatureRecord>& records) {
  std::ostringstream os;
  write_dump(records, os);
  return os.str();
}

inline std::vector<FeatureRecord> parse_dump(const std::string& source) {
  std::vector<FeatureRecord> out;
  std::size_t pos = 0;
  int line_no = 0;
  bool saw_header = false;
  while (pos <= source.size()) {
    std::size_t nl = source.find('\n', pos);
    std::string line = nl == std::string::npos ? source.substr(pos)
                                               : source.substr(pos, nl - pos);
    pos = nl == std::string::npos ? source.size() + 1 : nl + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    if (line.empty()) continue;

    std::vector<std::string> cells = featex_detail::split_tabs(line);
    if (!saw_header) {
      if (cells.size() != num_features + 3 || cells[0] != "track_id" ||
          cells[1] != "event_index" || cells.back() != "label")
        throw DumpError(line_no, "bad header");
      for (std::size_t i = 0; i < num_features; ++i)
        if (cells[i + 2] != feature_registry()[i].name)
          throw DumpError(line_no, "column " + std::to_string(i + 3) + " is \"" + cells[i + 2] +
                                       "\", want \"" + feature_registry()[i].name + "\"");
      saw_header = true;
      continue;
    }
    if (cells.size() != num_features + 3)
      throw DumpError(line_no, "expected " + std::to_string(num_features + 3) + " columns, got " +
                                   std::to_string(cells.size()));
    FeatureRecord rec;
    rec.track_id = cells[0];
    try {
      rec.event_index = static_cast<std::size_t>(std::stoull(cells[1]));
    } catch (const std::exception&) {
      throw DumpError(line_no, "bad event index \"" + cells[1] + "\"");
    }
    for (std::size_t i = 0; i < num_features; ++i) {
      const std::string& cell = cells[i + 2];
      char* end = nullptr;
      rec.values[i] = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size())
        throw DumpError(line_no, "bad number \"" + cell + "\" in column " + std::to_string(i + 3));
    }
    const std::string& lab = cells.back();
    auto l = lab.size() == 1 ? label_from_code(lab[0]) : std::nullopt;
    if (!l) throw DumpError(line_no, "bad label \"" + lab + "\"");
    rec.label = *l;
    out.push_back(std::move(rec));
  }
  if (!saw_header) throw DumpError(1, "empty dump");
  return out;
}

}  // namespace bendlab
