#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bendlab/rational.hpp"

namespace bendlab {

constexpr int min_midi = 0;
constexpr int max_midi = 127;
constexpr int num_strings = 6;
constexpr int max_fret = 30;
constexpr int max_key_accidentals = 7;

/// MIDI semitone number, A4 = 69.
struct Pitch {
  int midi = 0;
  bool operator==(const Pitch&) const = default;
};

/// Open-string pitches ordered by string number: index 0 holds string 1, the
/// highest-sounding string ("e"); index 5 holds string 6, the lowest ("E").
struct Tuning {
  std::array<int, num_strings> open_midi{};

  int open_for_string(int string_no) const {
    if (string_no < 1 || string_no > num_strings)
      throw std::domain_error("string number out of range: " + std::to_string(string_no));
    return open_midi[static_cast<std::size_t>(string_no - 1)];
  }

  bool strictly_decreasing() const {
    for (int i = 1; i < num_strings; ++i)
      if (open_midi[i] >= open_midi[i - 1]) return false;
    return true;
  }

  bool operator==(const Tuning&) const = default;
};

/// Standard tuning e B G D A E.
inline Tuning standard_tuning() { return Tuning{{64, 59, 55, 50, 45, 40}}; }

struct TimeSignature {
  int numerator = 4;
  int denominator = 4;  // power of two

  QL measure_length() const { return QL(numerator) * QL(4, denominator); }
  /// The notated beat unit in quarter lengths (1 for /4, 1/2 for /8, ...).
  QL beat_unit() const { return QL(4, denominator); }

  bool operator==(const TimeSignature&) const = default;
};

/// Signed accidental count: positive sharps, negative flats.
struct KeySignature {
  int accidentals = 0;
  bool operator==(const KeySignature&) const = default;
};

enum class BendKind { basic, held, reverse, up_down, complex_shape };

/// One point of a complex bend curve: position within the note as a fraction
/// of its duration, and the string displacement in quarter tones.
struct BendPoint {
  Rational time_frac;
  int offset_qt = 0;
  bool operator==(const BendPoint&) const = default;
};

/// amplitude_qt counts quarter tones; 4 = whole tone ("full").
struct BendAnnotation {
  BendKind kind = BendKind::basic;
  int amplitude_qt = 4;
  std::vector<BendPoint> points;  // complex bends only

  bool operator==(const BendAnnotation&) const = default;
};

struct Note {
  int string = 1;  // 1..6, 1 = highest-sounding
  int fret = 0;    // 0 = open
  std::optional<BendAnnotation> bend;

  bool operator==(const Note&) const = default;
};

/// One timed event: a single note or a chord. Chords are one event; notes
/// within an event sit on distinct strings.
struct NoteEvent {
  QL onset;     // from track start
  QL duration;  // > 0
  std::vector<Note> notes;
  bool tied_to_next = false;

  bool operator==(const NoteEvent&) const = default;
};

/// Effective signatures for one measure. Measures tile the track timeline.
struct Measure {
  TimeSignature time_sig;
  KeySignature key_sig;
  QL start;

  QL length() const { return time_sig.measure_length(); }
  QL end() const { return start + length(); }

  bool operator==(const Measure&) const = default;
};

struct Track {
  std::string name;
  Tuning tuning = standard_tuning();
  std::vector<Measure> measures;
  std::vector<NoteEvent> events;  // sorted strictly by onset, non-overlapping

  QL timeline_end() const { return measures.empty() ? QL(0) : measures.back().end(); }

  /// Index of the measure containing `offset`, or -1 when outside the timeline.
  int measure_index_at(const QL& offset) const {
    for (std::size_t i = 0; i < measures.size(); ++i)
      if (offset >= measures[i].start && offset < measures[i].end()) return static_cast<int>(i);
    return -1;
  }

  bool operator==(const Track&) const = default;
};

struct Score {
  std::string title;
  std::vector<Track> tracks;
  bool operator==(const Score&) const = default;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Sounding pitch of a fretted position: open-string pitch plus fret.
inline Pitch pitch_of(const Tuning& tuning, int string_no, int fret) {
  if (fret < 0) throw std::domain_error("negative fret");
  return Pitch{tuning.open_for_string(string_no) + fret};
}

/// One broken invariant. Violations are data, not exceptions: a score is
/// checked as a whole and every problem is reported.
struct Violation {
  std::string track;
  int measure_index = -1;  // -1 when not tied to a measure
  std::string rule;
  std::string detail;
};

namespace detail {

inline void check_bend(const BendAnnotation& b, const std::string& track, int measure,
                       std::vector<Violation>& out) {
  if (b.amplitude_qt < 1)
    out.push_back({track, measure, "bend amplitude", "amplitude_qt must be >= 1"});
  if (b.kind == BendKind::complex_shape) {
    const auto& pts = b.points;
    if (pts.size() < 2) {
      out.push_back({track, measure, "complex bend points", "needs at least 2 points"});
      return;
    }
    if (!(pts.front().time_frac == Rational(0)))
      out.push_back({track, measure, "complex bend points", "first point must be at time 0"});
    if (!(pts.back().time_frac == Rational(1)))
      out.push_back({track, measure, "complex bend points", "last point must be at time 1"});
    int max_off = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (pts[i].offset_qt < 0)
        out.push_back({track, measure, "complex bend points", "negative offset"});
      if (i > 0 && !(pts[i - 1].time_frac < pts[i].time_frac))
        out.push_back({track, measure, "complex bend points", "time fractions not strictly increasing"});
      max_off = std::max(max_off, pts[i].offset_qt);
    }
    if (max_off != b.amplitude_qt)
      out.push_back({track, measure, "bend amplitude",
                     "complex amplitude_qt must equal the maximum point offset"});
  } else if (!b.points.empty()) {
    out.push_back({track, measure, "bend points", "only complex bends carry points"});
  }
}

}  // namespace detail

/// Checks every model invariant; returns an empty list iff the score is
/// well-formed. Each violation names the track, measure, and rule broken.
inline std::vector<Violation> validate_score(const Score& score) {
  std::vector<Violation> out;
  for (const auto& track : score.tracks) {
    const std::string& tn = track.name;
    if (!track.tuning.strictly_decreasing())
      out.push_back({tn, -1, "tuning", "open pitches must strictly decrease from string 1 to 6"});

    // Measures tile the timeline from 0 with no gaps.
    QL expect_start(0);
    for (std::size_t m = 0; m < track.measures.size(); ++m) {
      const Measure& meas = track.measures[m];
      if (!(meas.start == expect_start))
        out.push_back({tn, static_cast<int>(m), "measure tiling",
                       "expected start " + expect_start.str() + ", got " + meas.start.str()});
      if (meas.time_sig.numerator < 1 ||
          (meas.time_sig.denominator & (meas.time_sig.denominator - 1)) != 0 ||
          meas.time_sig.denominator < 1)
        out.push_back({tn, static_cast<int>(m), "time signature",
                       "numerator must be positive and denominator a power of two"});
      if (std::abs(meas.key_sig.accidentals) > max_key_accidentals)
        out.push_back({tn, static_cast<int>(m), "key signature", "accidentals outside -7..7"});
      expect_start = meas.start + meas.length();
    }

    QL prev_end(0);
    bool first = true;
    for (std::size_t e = 0; e < track.events.size(); ++e) {
      const NoteEvent& ev = track.events[e];
      int mi = track.measure_index_at(ev.onset);
      if (!(ev.duration > QL(0)))
        out.push_back({tn, mi, "duration", "event duration must be positive"});
      if (ev.notes.empty())
        out.push_back({tn, mi, "notes", "event carries no notes"});
      if (!first && !(ev.onset >= prev_end))
        out.push_back({tn, mi, "no overlap", "event at " + ev.onset.str() +
                                                 " starts before the previous event ends"});
      if (mi < 0) {
        out.push_back({tn, -1, "event in measure",
                       "onset " + ev.onset.str() + " lies outside every measure"});
      } else if (ev.onset + ev.duration > track.measures[static_cast<std::size_t>(mi)].end()) {
        out.push_back({tn, mi, "event in measure",
                       "event at " + ev.onset.str() + " crosses the measure boundary"});
      }

      std::array<bool, num_strings + 1> used{};
      for (const Note& n : ev.notes) {
        if (n.string < 1 || n.string > num_strings) {
          out.push_back({tn, mi, "string range", "string " + std::to_string(n.string)});
          continue;
        }
        if (used[static_cast<std::size_t>(n.string)])
          out.push_back({tn, mi, "distinct strings",
                         "two notes on string " + std::to_string(n.string)});
        used[static_cast<std::size_t>(n.string)] = true;
        if (n.fret < 0 || n.fret > max_fret)
          out.push_back({tn, mi, "fret range", "fret " + std::to_string(n.fret)});
        else {
          int midi = track.tuning.open_for_string(n.string) + n.fret;
          if (midi < min_midi || midi > max_midi)
            out.push_back({tn, mi, "pitch range", "midi " + std::to_string(midi)});
        }
        if (n.bend) detail::check_bend(*n.bend, tn, mi, out);
      }
      // A chord bends as one gesture: every bent note must carry the same
      // annotation, so the event has a single well-defined bend shape.
      const BendAnnotation* chord_bend = nullptr;
      for (const Note& n : ev.notes) {
        if (!n.bend) continue;
        if (chord_bend && !(*chord_bend == *n.bend)) {
          out.push_back({tn, mi, "chord bend conflict",
                         "bent notes of one event carry differing annotations"});
          break;
        }
        chord_bend = &*n.bend;
      }
      prev_end = ev.onset + ev.duration;
      first = false;
    }
  }
  return out;
}

}  // namespace bendlab
