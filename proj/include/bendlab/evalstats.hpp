#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bendlab/bendsem.hpp"
#include "bendlab/featex.hpp"
#include "bendlab/learn.hpp"

// Dataset protocol and reporting: duplicate removal, the track-grouped
// train/test split, confusion-matrix scoring, and the corpus statistics
// (label counts, fretboard heatmaps, per-label histograms).

namespace bendlab {

// ---------------------------------------------------------------------------
// Track-wise dedup
// ---------------------------------------------------------------------------

namespace evalstats_detail {

/// Byte-exact identity of (track, values, label) for duplicate detection.
inline std::string record_key(const FeatureRecord& r, bool include_track) {
  std::string key;
  if (include_track) key += r.track_id;
  key += '\0';
  key += label_code(r.label);
  key.resize(key.size() + sizeof(double) * num_features);
  std::memcpy(key.data() + key.size() - sizeof(double) * num_features, r.values.data(),
              sizeof(double) * num_features);
  return key;
}

}  // namespace evalstats_detail

/// Within each track, records with identical values and label collapse to
/// the one with the lowest event_index; equal records in different tracks
/// all survive (repeats across songs are evidence, repeats within a song
/// are riffs).
inline std::vector<FeatureRecord> dedup_trackwise(const std::vector<FeatureRecord>& records) {
  std::map<std::string, std::size_t> winner;  // key -> input position of keeper
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::string key = evalstats_detail::record_key(records[i], true);
    auto [it, fresh] = winner.try_emplace(key, i);
    if (!fresh && records[i].event_index < records[it->second].event_index) it->second = i;
  }
  std::vector<FeatureRecord> out;
  out.reserve(winner.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (winner.at(evalstats_detail::record_key(records[i], true)) == i)
      out.push_back(records[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Track-grouped split
// ---------------------------------------------------------------------------

struct SplitSpec {
  double test_fraction = 0.25;
  double imbalance_tolerance = 0.02;  // absolute per-class proportion difference
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<FeatureRecord> train;
  std::vector<FeatureRecord> test;
  std::vector<std::string> train_tracks;  // sorted
  std::vector<std::string> test_tracks;   // sorted
  double achieved_gap = 0;
  std::optional<std::string> warning;
};

/// The split cannot exist at all (fewer than two tracks).
class SplitError : public std::runtime_error {
 public:
  explicit SplitError(const std::string& what) : std::runtime_error(what) {}
};

namespace evalstats_detail {

struct TrackStat {
  std::string id;
  std::int64_t total = 0;
  std::array<std::int64_t, num_labels> per_class{};
};

/// Largest per-class share difference between the two sides.
inline double proportion_gap(const std::vector<TrackStat>& stats,
                             const std::vector<int>& side /* 0 train, 1 test */) {
  std::array<std::int64_t, num_labels> a{}, b{};
  std::int64_t na = 0, nb = 0;
  for (std::size_t t = 0; t < stats.size(); ++t) {
    auto& acc = side[t] == 0 ? a : b;
    auto& n = side[t] == 0 ? na : nb;
    for (int c = 0; c < num_labels; ++c) acc[static_cast<std::size_t>(c)] += stats[t].per_class[static_cast<std::size_t>(c)];
    n += stats[t].total;
  }
  if (na == 0 || nb == 0) return 1.0;
  double gap = 0;
  for (int c = 0; c < num_labels; ++c) {
    double pa = static_cast<double>(a[static_cast<std::size_t>(c)]) / static_cast<double>(na);
    double pb = static_cast<double>(b[static_cast<std::size_t>(c)]) / static_cast<double>(nb);
    gap = std::max(gap, std::abs(pa - pb));
  }
  return gap;
}

}  // namespace evalstats_detail

/// Assigns whole tracks to train or test: seeded shuffle, greedy fill of
/// the test side to the note-count target, then up to 1000 seeded swap
/// proposals, each accepted only if it strictly shrinks the largest
/// per-class proportion difference between the sides; the search stops
/// early once within tolerance. Misses after the budget return the best
/// split found plus a warning.
inline SplitResult split_by_track(const std::vector<FeatureRecord>& records,
                                  const SplitSpec& spec) {
  if (!(spec.test_fraction > 0 && spec.test_fraction < 1))
    throw std::domain_error("test_fraction must be inside (0,1)");

  // Per-track tallies, tracks in first-appearance order.
  std::vector<evalstats_detail::TrackStat> stats;
  std::map<std::string, std::size_t> index_of;
  for (const FeatureRecord& r : records) {
    auto [it, fresh] = index_of.try_emplace(r.track_id, stats.size());
    if (fresh) stats.push_back({r.track_id, 0, {}});
    auto& st = stats[it->second];
    ++st.total;
    ++st.per_class[static_cast<std::size_t>(r.label)];
  }
  if (stats.size() < 2) throw SplitError("cannot split without leaking a track");

  std::vector<std::size_t> order(stats.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 rng(spec.seed);
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
    std::swap(order[i], order[j]);
  }

  double target = spec.test_fraction * static_cast<double>(records.size());
  std::vector<int> side(stats.size(), 0);
  std::int64_t test_total = 0;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    if (static_cast<double>(test_total) >= target) break;
    side[order[oi]] = 1;
    test_total += stats[order[oi]].total;
  }
  // Both sides must hold at least one track.
  auto count_side = [&](int s) {
    return std::count(side.begin(), side.end(), s);
  };
  if (count_side(1) == 0) side[order[0]] = 1;
  if (count_side(0) == 0) side[order[order.size() - 1]] = 0;

  double gap = evalstats_detail::proportion_gap(stats, side);
  for (int step = 0; step < 1000 && gap > spec.imbalance_tolerance; ++step) {
    std::vector<std::size_t> test_ids, train_ids;
    for (std::size_t t = 0; t < stats.size(); ++t) (side[t] == 1 ? test_ids : train_ids).push_back(t);
    std::size_t ti = test_ids[static_cast<std::size_t>(rng.next_below(test_ids.size()))];
    std::size_t tj = train_ids[static_cast<std::size_t>(rng.next_below(train_ids.size()))];
    side[ti] = 0;
    side[tj] = 1;
    double candidate = evalstats_detail::proportion_gap(stats, side);
    if (candidate < gap) {
      gap = candidate;
    } else {
      side[ti] = 1;
      side[tj] = 0;
    }
  }

  SplitResult out;
  out.achieved_gap = gap;
  for (const evalstats_detail::TrackStat& st : stats) {
    std::size_t t = index_of.at(st.id);
    (side[t] == 1 ? out.test_tracks : out.train_tracks).push_back(st.id);
  }
  std::sort(out.train_tracks.begin(), out.train_tracks.end());
  std::sort(out.test_tracks.begin(), out.test_tracks.end());
  for (const FeatureRecord& r : records)
    (side[index_of.at(r.track_id)] == 1 ? out.test : out.train).push_back(r);
  if (gap > spec.imbalance_tolerance) {
    std::ostringstream os;
    os << "class imbalance tolerance " << spec.imbalance_tolerance
       << " not met; best per-class proportion gap " << featex_detail::fmt_g(gap);
    out.warning = os.str();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

struct ClassMetrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::int64_t support = 0;

  bool operator==(const ClassMetrics&) const = default;
};

struct EvalReport {
  std::array<std::array<std::int64_t, num_labels>, num_labels> confusion{};  // [true][pred]
  std::array<ClassMetrics, num_labels> per_class{};
  double macro_f1 = 0;
  ClassMetrics binary_bend;  // positive = any label but none
  std::int64_t total = 0;

  bool operator==(const EvalReport&) const = default;
};

namespace evalstats_detail {

/// Precision/recall/F1 with every 0/0 defined as 0.
inline ClassMetrics metrics_from(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  ClassMetrics m;
  m.support = tp + fn;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

}  // namespace evalstats_detail

/// Confusion matrix and derived scores of predicted against true labels.
/// The binary view collapses up/held/down into one positive class.
inline EvalReport evaluate(const std::vector<Label>& truth, const std::vector<Label>& predicted) {
  if (truth.size() != predicted.size()) throw std::domain_error("label sequences differ in length");
  if (truth.empty()) throw std::domain_error("nothing to evaluate");

  EvalReport rep;
  rep.total = static_cast<std::int64_t>(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++rep.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];

  double f1_sum = 0;
  for (int c = 0; c < num_labels; ++c) {
    std::int64_t tp = rep.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    std::int64_t fp = 0, fn = 0;
    for (int o = 0; o < num_labels; ++o) {
      if (o == c) continue;
      fp += rep.confusion[static_cast<std::size_t>(o)][static_cast<std::size_t>(c)];
      fn += rep.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(o)];
    }
    rep.per_class[static_cast<std::size_t>(c)] = evalstats_detail::metrics_from(tp, fp, fn);
    f1_sum += rep.per_class[static_cast<std::size_t>(c)].f1;
  }
  rep.macro_f1 = f1_sum / num_labels;

  std::int64_t btp = 0, bfp = 0, bfn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    bool t = truth[i] != Label::none;
    bool p = predicted[i] != Label::none;
    if (t && p) ++btp;
    if (!t && p) ++bfp;
    if (t && !p) ++bfn;
  }
  rep.binary_bend = evalstats_detail::metrics_from(btp, bfp, bfn);
  return rep;
}

inline EvalReport evaluate(const Model& model, const std::vector<FeatureRecord>& records) {
  std::vector<Label> truth, predicted;
  truth.reserve(records.size());
  predicted.reserve(records.size());
  for (const FeatureRecord& r : records) {
    truth.push_back(r.label);
    predicted.push_back(predict(model, r.values));
  }
  return evaluate(truth, predicted);
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

struct LabelCounts {
  std::array<std::int64_t, num_labels> per_label{};
  std::int64_t total = 0;

  bool operator==(const LabelCounts&) const = default;
};

inline LabelCounts label_counts(const std::vector<LabeledEvent>& events) {
  LabelCounts out;
  for (const LabeledEvent& ev : events) {
    ++out.per_label[static_cast<std::size_t>(ev.label)];
    ++out.total;
  }
  return out;
}

struct Heatmap {
  std::array<std::array<double, static_cast<std::size_t>(max_fret) + 1>, num_strings> cell{};
  std::int64_t counted = 0;  // notes behind the normalization
};

enum class HeatmapFilter { all, bent_only };

/// Normalized note density over the fretboard from raw positions (open
/// strings included). bent_only keeps only events whose label is a bend.
inline Heatmap fretboard_heatmap(const std::vector<LabeledEvent>& events, HeatmapFilter filter) {
  Heatmap hm;
  for (const LabeledEvent& ev : events) {
    if (filter == HeatmapFilter::bent_only && ev.label == Label::none) continue;
    for (const auto& [string_no, fret] : ev.strings_frets) {
      hm.cell[static_cast<std::size_t>(string_no - 1)][static_cast<std::size_t>(fret)] += 1.0;
      ++hm.counted;
    }
  }
  if (hm.counted > 0)
    for (auto& row : hm.cell)
      for (double& v : row) v /= static_cast<double>(hm.counted);
  return hm;
}

enum class DistKind { beat_strength, duration, relative_duration, pitch };

/// One histogram table: rows are bins, columns are either the four labels
/// or a single aggregate, each column normalized to sum 1 (all-zero when a
/// column counted nothing).
struct Distribution {
  DistKind quantity = DistKind::beat_strength;
  bool per_label = true;
  std::vector<std::string> bins;
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> columns;  // columns[c][bin]
};

/// Histogram of the chosen quantity. Bins are the exact values seen:
/// beat-strength levels, distinct durations, longer/shorter/same against
/// the in-run predecessor (predecessor-less events are skipped), or
/// rounded mean arrival pitch.
inline Distribution distribution(const std::vector<LabeledEvent>& events, DistKind quantity,
                                 bool per_label = true) {
  Distribution out;
  out.quantity = quantity;
  out.per_label = per_label;

  // Bin key -> (sort key, display); counts per label gathered exactly.
  struct Bin {
    std::vector<std::int64_t> counts = std::vector<std::int64_t>(num_labels, 0);
  };
  auto runs = featex_detail::run_ids(events);

  std::map<std::string, Bin> by_name;  // used for relative_duration only
  std::map<Rational, Bin> by_ql;
  std::map<int, Bin> by_int;
  std::map<double, Bin, std::greater<double>> by_strength;  // strongest first

  for (std::size_t i = 0; i < events.size(); ++i) {
    const LabeledEvent& ev = events[i];
    std::size_t c = static_cast<std::size_t>(ev.label);
    switch (quantity) {
      case DistKind::beat_strength:
        ++by_strength[beat_strength(ev.measure_offset, ev.time_sig)].counts[c];
        break;
      case DistKind::duration:
        ++by_ql[ev.duration].counts[c];
        break;
      case DistKind::relative_duration: {
        if (i == 0 || runs[i] != runs[i - 1]) break;  // no predecessor to compare
        const LabeledEvent& prev = events[i - 1];
        const char* bin = ev.duration > prev.duration   ? "longer"
                          : ev.duration < prev.duration ? "shorter"
                                                        : "same";
        ++by_name[bin].counts[c];
        break;
      }
      case DistKind::pitch:
        ++by_int[featex_detail::round_half_up(mean_arrival(ev))].counts[c];
        break;
    }
  }

  std::vector<Bin> rows;
  if (quantity == DistKind::relative_duration) {
    for (const char* name : {"longer", "shorter", "same"}) {
      out.bins.push_back(name);
      rows.push_back(by_name[name]);  // zero row when never seen
    }
  } else if (quantity == DistKind::duration) {
    for (const auto& [ql, bin] : by_ql) {
      out.bins.push_back(ql.str());
      rows.push_back(bin);
    }
  } else if (quantity == DistKind::pitch) {
    for (const auto& [midi, bin] : by_int) {
      out.bins.push_back(std::to_string(midi));
      rows.push_back(bin);
    }
  } else {
    for (const auto& [value, bin] : by_strength) {
      out.bins.push_back(featex_detail::fmt_g(value));
      rows.push_back(bin);
    }
  }

  int columns = per_label ? num_labels : 1;
  for (int c = 0; c < columns; ++c) {
    out.column_names.push_back(per_label ? label_name(static_cast<Label>(c)) : "all");
    std::vector<double> col(rows.size(), 0.0);
    std::int64_t total = 0;
    for (std::size_t b = 0; b < rows.size(); ++b) {
      std::int64_t n = 0;
      if (per_label)
        n = rows[b].counts[static_cast<std::size_t>(c)];
      else
        for (std::int64_t x : rows[b].counts) n += x;
      col[b] = static_cast<double>(n);
      total += n;
    }
    if (total > 0)
      for (double& x : col) x /= static_cast<double>(total);
    out.columns.push_back(std::move(col));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report rendering (tab-separated tables, plus one vector graphic)
// ---------------------------------------------------------------------------

inline std::string render_label_counts(const LabelCounts& counts) {
  std::ostringstream os;
  os << "∅\t↑\t→\t↓\tTotal\n";
  for (std::int64_t n : counts.per_label) os << n << "\t";
  os << counts.total << "\n";
  return os.str();
}

inline std::string render_confusion(const EvalReport& rep) {
  std::ostringstream os;
  os << "true\\pred";
  for (int c = 0; c < num_labels; ++c) os << "\t" << label_name(static_cast<Label>(c));
  os << "\n";
  for (int t = 0; t < num_labels; ++t) {
    os << label_name(static_cast<Label>(t));
    for (int p = 0; p < num_labels; ++p)
      os << "\t" << rep.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    os << "\n";
  }
  return os.str();
}

inline std::string render_scores(const EvalReport& rep) {
  using featex_detail::fmt_g;
  std::ostringstream os;
  os << "class\tprecision\trecall\tf1\tsupport\n";
  for (int c = 0; c < num_labels; ++c) {
    const ClassMetrics& m = rep.per_class[static_cast<std::size_t>(c)];
    os << label_name(static_cast<Label>(c)) << "\t" << fmt_g(m.precision) << "\t"
       << fmt_g(m.recall) << "\t" << fmt_g(m.f1) << "\t" << m.support << "\n";
  }
  os << "macro_f1\t\t\t" << fmt_g(rep.macro_f1) << "\t" << rep.total << "\n";
  os << "binary_bend\t" << fmt_g(rep.binary_bend.precision) << "\t"
     << fmt_g(rep.binary_bend.recall) << "\t" << fmt_g(rep.binary_bend.f1) << "\t"
     << rep.binary_bend.support << "\n";
  return os.str();
}

inline std::string render_heatmap_tsv(const Heatmap& hm) {
  using featex_detail::fmt_g;
  static const char* row_names[num_strings] = {"e", "B", "G", "D", "A", "E"};
  std::ostringstream os;
  os << "string\\fret";
  for (int f = 0; f <= max_fret; ++f) os << "\t" << f;
  os << "\n";
  for (int s = 0; s < num_strings; ++s) {
    os << row_names[s];
    for (int f = 0; f <= max_fret; ++f)
      os << "\t" << fmt_g(hm.cell[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)]);
    os << "\n";
  }
  return os.str();
}

/// Self-contained vector graphic of the heatmap: one shaded rectangle per
/// cell, darker = denser, rows labeled e B G D A E top to bottom.
inline std::string render_heatmap_svg(const Heatmap& hm, const std::string& title) {
  static const char* row_names[num_strings] = {"e", "B", "G", "D", "A", "E"};
  const int cell = 24, left = 40, top = 40;
  const int width = left + cell * (max_fret + 1) + 10;
  const int height = top + cell * num_strings + 30;

  double peak = 0;
  for (const auto& row : hm.cell)
    for (double v : row) peak = std::max(peak, v);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "  <text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">"
     << title << "</text>\n";
  for (int s = 0; s < num_strings; ++s) {
    os << "  <text x=\"" << left - 14 << "\" y=\"" << top + s * cell + cell / 2 + 5
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << row_names[s] << "</text>\n";
    for (int f = 0; f <= max_fret; ++f) {
      double v = hm.cell[static_cast<std::size_t>(s)][static_cast<std::size_t>(f)];
      int shade = peak > 0 ? 255 - static_cast<int>(std::lround(235.0 * (v / peak))) : 255;
      os << "  <rect x=\"" << left + f * cell << "\" y=\"" << top + s * cell << "\" width=\""
         << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade << ","
         << shade << ")\" stroke=\"#999\"/>\n";
    }
  }
  for (int f = 0; f <= max_fret; f += 2)
    os << "  <text x=\"" << left + f * cell + cell / 2 - 4 << "\" y=\""
       << top + num_strings * cell + 16 << "\" font-family=\"sans-serif\" font-size=\"10\">" << f
       << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

inline std::string render_distribution(const Distribution& dist) {
  using featex_detail::fmt_g;
  std::ostringstream os;
  os << "bin";
  for (const std::string& name : dist.column_names) os << "\t" << name;
  os << "\n";
  for (std::size_t b = 0; b < dist.bins.size(); ++b) {
    os << dist.bins[b];
    for (const auto& col : dist.columns) os << "\t" << fmt_g(col[b]);
    os << "\n";
  }
  return os.str();
}

}  // namespace bendlab
