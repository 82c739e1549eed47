#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bendlab/model.hpp"
#include "bendlab/rational.hpp"

// String-motion labels and the pitch-space simplification. Every played
// event reduces to one of four motions of the string while it sounds:
//
//   none  - the string stays at the fretted position
//   up    - the string is pushed, pitch rises to fret + amplitude
//   held  - the string is kept displaced the whole time
//   down  - the string returns, pitch falls back toward the fret
//
// An up-and-down bend is two motions and splits into two half-duration
// events; a free-form bend curve splits wherever its slope changes sign.

namespace bendlab {

enum class Label : int { none = 0, up = 1, held = 2, down = 3 };

constexpr int num_labels = 4;

/// Canonical one-letter codes, used in dumps and reports: N U H D.
inline char label_code(Label l) {
  switch (l) {
    case Label::none: return 'N';
    case Label::up: return 'U';
    case Label::held: return 'H';
    case Label::down: return 'D';
  }
  return 'N';
}

inline const char* label_name(Label l) {
  switch (l) {
    case Label::none: return "none";
    case Label::up: return "up";
    case Label::held: return "held";
    case Label::down: return "down";
  }
  return "none";
}

inline std::optional<Label> label_from_code(char c) {
  switch (c) {
    case 'N': return Label::none;
    case 'U': return Label::up;
    case 'H': return Label::held;
    case 'D': return Label::down;
    default: return std::nullopt;
  }
}

/// Quarter tones to semitones, halves rounding up: 1 -> 1, 2 -> 1, 3 -> 2,
/// 4 -> 2, 5 -> 3. Negative displacements never occur.
inline int qt_to_semitones(int qt) {
  if (qt < 0) throw std::domain_error("negative quarter-tone displacement");
  return (qt + 1) / 2;
}

/// One event of the simplified, bend-less representation: where the string
/// motion ends up in pitch space, plus everything downstream features need.
struct LabeledEvent {
  std::string track_id;
  std::size_t event_index = 0;   // ordinal within this track's labeled sequence
  std::size_t source_event = 0;  // index of the originating event in Track::events
  QL onset;
  QL duration;
  QL measure_offset;  // onset relative to the enclosing measure's start
  TimeSignature time_sig;
  KeySignature key_sig;
  Label label = Label::none;
  std::vector<int> arrival_midis;                  // one per note, string order
  std::vector<std::pair<int, int>> strings_frets;  // (string, fret), string order

  bool operator==(const LabeledEvent&) const = default;
};

/// Mean arrival pitch of an event (chords average their notes).
inline double mean_arrival(const LabeledEvent& ev) {
  double sum = 0;
  for (int m : ev.arrival_midis) sum += m;
  return ev.arrival_midis.empty() ? 0.0 : sum / static_cast<double>(ev.arrival_midis.size());
}

// ---------------------------------------------------------------------------
// Tie collapsing
// ---------------------------------------------------------------------------

/// Merges each chain of tied events into one event carrying the head's notes
/// (bend included) and the summed duration. A tie into an event with a
/// different (string, fret) shape is dropped with a warning; a tie on the
/// last event dangles and is dropped likewise. src_first, when given,
/// receives for each output event the index of its head in `track.events`.
inline Track collapse_ties(const Track& track, std::vector<std::size_t>* src_first = nullptr,
                           std::vector<std::string>* warnings = nullptr) {
  auto shape_of = [](const NoteEvent& ev) {
    std::vector<std::pair<int, int>> shape;
    for (const Note& n : ev.notes) shape.emplace_back(n.string, n.fret);
    std::sort(shape.begin(), shape.end());
    return shape;
  };
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(msg);
  };

  Track out = track;
  out.events.clear();
  if (src_first) src_first->clear();

  std::size_t i = 0;
  while (i < track.events.size()) {
    NoteEvent merged = track.events[i];
    std::size_t head = i;
    while (merged.tied_to_next) {
      if (i + 1 >= track.events.size()) {
        warn("tie on the final event of track \"" + track.name + "\" has no target");
        break;
      }
      const NoteEvent& next = track.events[i + 1];
      if (shape_of(merged) != shape_of(next)) {
        warn("tie into a different chord shape at onset " + next.onset.str() + " in track \"" +
             track.name + "\"; chain broken");
        break;
      }
      merged.duration += next.duration;
      merged.tied_to_next = next.tied_to_next;
      ++i;
    }
    merged.tied_to_next = false;
    out.events.push_back(std::move(merged));
    if (src_first) src_first->push_back(head);
    ++i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Free-form curve decomposition
// ---------------------------------------------------------------------------

/// One slope-homogeneous piece of a bend curve, in fractions of the event.
struct BendSegment {
  Label label = Label::none;
  QL start_frac;
  QL end_frac;
  int end_offset_qt = 0;  // string displacement when the piece ends

  bool operator==(const BendSegment&) const = default;
};

namespace bendsem_detail {

/// Nearest multiple of 1/8, halves rounding up.
inline Rational snap_to_eighths(const Rational& frac) {
  Rational scaled = frac * Rational(8);
  // floor(scaled + 1/2) implements round-half-up for nonnegative values.
  Rational shifted = scaled + Rational(1, 2);
  std::int64_t floored = shifted.num() / shifted.den();
  return Rational(floored, 8);
}

}  // namespace bendsem_detail

/// Splits a free-form curve into labeled pieces: rising = up, falling =
/// down, flat displaced = held, flat at rest = none. Point times snap to
/// the nearest eighth of the duration first; adjacent pieces with equal
/// labels merge.
inline std::vector<BendSegment> decompose_curve(const std::vector<BendPoint>& points) {
  // Snap, then drop points collapsing onto the previous snapped time (the
  // later point wins so the curve keeps its final value).
  std::vector<BendPoint> snapped;
  for (const BendPoint& p : points) {
    Rational t = bendsem_detail::snap_to_eighths(p.time_frac);
    if (!snapped.empty() && snapped.back().time_frac == t)
      snapped.back().offset_qt = p.offset_qt;
    else
      snapped.push_back(BendPoint{t, p.offset_qt});
  }

  std::vector<BendSegment> out;
  for (std::size_t i = 1; i < snapped.size(); ++i) {
    const BendPoint& a = snapped[i - 1];
    const BendPoint& b = snapped[i];
    Label l;
    if (b.offset_qt > a.offset_qt)
      l = Label::up;
    else if (b.offset_qt < a.offset_qt)
      l = Label::down;
    else
      l = a.offset_qt > 0 ? Label::held : Label::none;
    if (!out.empty() && out.back().label == l) {
      out.back().end_frac = b.time_frac;
      out.back().end_offset_qt = b.offset_qt;
    } else {
      out.push_back(BendSegment{l, a.time_frac, b.time_frac, b.offset_qt});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labeling / simplification
// ---------------------------------------------------------------------------

namespace bendsem_detail {

inline const BendAnnotation* event_bend(const NoteEvent& ev) {
  for (const Note& n : ev.notes)
    if (n.bend) return &*n.bend;
  return nullptr;
}

/// The simplified event for one time slice: label plus per-note arrival
/// pitches, where bent notes land `arrive_offset_qt` above their fret.
inline LabeledEvent make_piece(const Track& track, const NoteEvent& ev, const QL& onset,
                               const QL& duration, Label label, int arrive_offset_qt) {
  LabeledEvent out;
  out.onset = onset;
  out.duration = duration;
  out.label = label;
  int mi = track.measure_index_at(onset);
  if (mi < 0) throw std::domain_error("event onset outside every measure");
  const Measure& m = track.measures[static_cast<std::size_t>(mi)];
  out.measure_offset = onset - m.start;
  out.time_sig = m.time_sig;
  out.key_sig = m.key_sig;
  int lift = qt_to_semitones(arrive_offset_qt);
  for (const Note& n : ev.notes) {
    int fretted = pitch_of(track.tuning, n.string, n.fret).midi;
    out.arrival_midis.push_back(n.bend ? fretted + lift : fretted);
    out.strings_frets.emplace_back(n.string, n.fret);
  }
  return out;
}

}  // namespace bendsem_detail

/// Derives the simplified, bend-less event sequence of one track: each event
/// becomes one labeled event, except up-and-down bends (two equal halves,
/// up then down) and free-form curves (one piece per slope change). Arrival
/// pitch is the sounding pitch when the piece ends, rounded to semitones.
/// Expects a tie-collapsed track.
inline std::vector<LabeledEvent> label_events(const Track& track,
                                              const std::string& track_id = "") {
  std::vector<LabeledEvent> out;
  for (std::size_t ei = 0; ei < track.events.size(); ++ei) {
    const NoteEvent& ev = track.events[ei];
    const BendAnnotation* bend = bendsem_detail::event_bend(ev);
    auto emit = [&](LabeledEvent&& piece) {
      piece.track_id = track_id;
      piece.event_index = out.size();
      piece.source_event = ei;
      out.push_back(std::move(piece));
    };

    if (!bend) {
      emit(bendsem_detail::make_piece(track, ev, ev.onset, ev.duration, Label::none, 0));
      continue;
    }
    switch (bend->kind) {
      case BendKind::basic:
        emit(bendsem_detail::make_piece(track, ev, ev.onset, ev.duration, Label::up,
                                        bend->amplitude_qt));
        break;
      case BendKind::held:
        emit(bendsem_detail::make_piece(track, ev, ev.onset, ev.duration, Label::held,
                                        bend->amplitude_qt));
        break;
      case BendKind::reverse:
        // Starts displaced, arrives back at the fretted pitch.
        emit(bendsem_detail::make_piece(track, ev, ev.onset, ev.duration, Label::down, 0));
        break;
      case BendKind::up_down: {
        QL half = ev.duration / QL(2);
        emit(bendsem_detail::make_piece(track, ev, ev.onset, half, Label::up,
                                        bend->amplitude_qt));
        emit(bendsem_detail::make_piece(track, ev, ev.onset + half, half, Label::down, 0));
        break;
      }
      case BendKind::complex_shape: {
        for (const BendSegment& seg : decompose_curve(bend->points)) {
          QL start = ev.onset + seg.start_frac * ev.duration;
          QL dur = (seg.end_frac - seg.start_frac) * ev.duration;
          emit(bendsem_detail::make_piece(track, ev, start, dur, seg.label, seg.end_offset_qt));
        }
        break;
      }
    }
  }
  return out;
}

/// Removes every bend annotation; returns how many notes were stripped.
inline int strip_bends(Score& score) {
  int stripped = 0;
  for (Track& track : score.tracks)
    for (NoteEvent& ev : track.events)
      for (Note& n : ev.notes)
        if (n.bend) {
          n.bend.reset();
          ++stripped;
        }
  return stripped;
}

}  // namespace bendlab
