#pragma once

#include <glob.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bendlab/bendsem.hpp"
#include "bendlab/evalstats.hpp"
#include "bendlab/featex.hpp"
#include "bendlab/learn.hpp"
#include "bendlab/model.hpp"
#include "bendlab/tabio.hpp"

// Command implementations behind the `bendlab` binary. Each cmd_* is a pure
// function of (arguments, input files) writing to the given streams and
// returning the process exit code:
//
//   0 success | 2 parse | 3 validation | 4 split | 5 model mismatch
//   6 selection | 1 anything else

namespace bendlab::cli {

/// An event selector that matched nothing.
class SelectionError : public std::runtime_error {
 public:
  explicit SelectionError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Plumbing
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read \"" + path + "\"");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Writes to a file, or to the given stream when path is "-".
inline void write_output(const std::string& path, const std::string& content, std::ostream& out) {
  if (path == "-") {
    out << content;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write \"" + path + "\"");
  os << content;
}

/// Expands shell-style patterns against the filesystem; plain paths pass
/// through untouched, each pattern's matches arrive sorted.
inline std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (const std::string& p : patterns) {
    if (p.find_first_of("*?[") == std::string::npos) {
      out.push_back(p);
      continue;
    }
    ::glob_t g{};
    int rc = ::glob(p.c_str(), 0, nullptr, &g);
    if (rc == 0)
      for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    ::globfree(&g);
  }
  return out;
}

inline std::optional<TabFormat> parse_format_name(const std::string& name) {
  if (name.empty()) return std::nullopt;
  if (name == "text") return TabFormat::text;
  if (name == "structured") return TabFormat::structured;
  throw std::domain_error("unknown format \"" + name + "\" (want text or structured)");
}

/// "<path>:<track index>" — the stable identity of a track in reports,
/// dumps, and selectors.
inline std::string make_track_id(const std::string& path, std::size_t track_index) {
  return path + ":" + std::to_string(track_index);
}

struct CorpusEntry {
  std::string path;
  Score score;
  TabFormat format = TabFormat::text;
};

/// Parses every input file; throws the first ParseError/ValidationError
/// with the file's path prepended to the message.
inline std::vector<CorpusEntry> load_corpus(const std::vector<std::string>& paths,
                                            std::optional<TabFormat> forced) {
  std::vector<CorpusEntry> out;
  for (const std::string& path : paths) {
    std::string source = read_file(path);
    TabFormat fmt = forced ? *forced : detect_format(source);
    Score score = fmt == TabFormat::structured ? parse_structured(source) : parse_text(source);
    out.push_back(CorpusEntry{path, std::move(score), fmt});
  }
  return out;
}

/// Per-track derivation used by every analysis command: collapse ties,
/// label, extract.
struct TrackPipeline {
  std::vector<std::size_t> src_first;  // collapsed event -> head index in Track::events
  std::vector<LabeledEvent> labeled;
  std::vector<FeatureRecord> records;
};

inline TrackPipeline run_track_pipeline(const Track& track, const std::string& track_id,
                                        std::vector<std::string>* warnings = nullptr) {
  TrackPipeline p;
  Track collapsed = collapse_ties(track, &p.src_first, warnings);
  p.labeled = label_events(collapsed, track_id);
  p.records = extract_features(p.labeled);
  return p;
}

struct CorpusDerivation {
  std::vector<LabeledEvent> labeled;    // all tracks, corpus order
  std::vector<FeatureRecord> records;   // same order
  std::vector<std::string> warnings;
};

inline CorpusDerivation derive_corpus(const std::vector<CorpusEntry>& corpus) {
  CorpusDerivation d;
  for (const CorpusEntry& entry : corpus) {
    for (std::size_t ti = 0; ti < entry.score.tracks.size(); ++ti) {
      TrackPipeline p = run_track_pipeline(entry.score.tracks[ti],
                                           make_track_id(entry.path, ti), &d.warnings);
      d.labeled.insert(d.labeled.end(), p.labeled.begin(), p.labeled.end());
      d.records.insert(d.records.end(), p.records.begin(), p.records.end());
    }
  }
  return d;
}

/// Maps every error class this toolkit throws to its exit code, printing
/// the message to err.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DumpError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ModelFormatError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const SplitError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const ModelMismatchError& e) {
    err << "error: " << e.what() << "\n";
    return 5;
  } catch (const SelectionError& e) {
    err << "error: " << e.what() << "\n";
    return 6;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestArgs {
  std::vector<std::string> patterns;
  std::optional<TabFormat> format;
};

/// Parses and validates every input, one summary line per file.
inline int cmd_ingest(const IngestArgs& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> paths = expand_globs(args.patterns);
  if (paths.empty()) {
    err << "error: no input files\n";
    return 2;
  }
  bool parse_failed = false, validation_failed = false;
  std::size_t files = 0, tracks = 0, events = 0, measures = 0;
  for (const std::string& path : paths) {
    try {
      std::vector<CorpusEntry> one = load_corpus({path}, args.format);
      const Score& score = one.front().score;
      std::size_t t = score.tracks.size(), e = 0, m = 0;
      for (const Track& track : score.tracks) {
        e += track.events.size();
        m += track.measures.size();
      }
      out << path << ": ok, " << t << (t == 1 ? " track, " : " tracks, ") << e
          << (e == 1 ? " event, " : " events, ") << m << (m == 1 ? " measure" : " measures")
          << "\n";
      ++files;
      tracks += t;
      events += e;
      measures += m;
    } catch (const ParseError& e) {
      out << path << ": error: " << e.what() << "\n";
      parse_failed = true;
    } catch (const ValidationError& e) {
      out << path << ": invalid: " << e.what() << "\n";
      validation_failed = true;
    }
  }
  out << "total: " << files << (files == 1 ? " file, " : " files, ") << tracks
      << (tracks == 1 ? " track, " : " tracks, ") << events
      << (events == 1 ? " event, " : " events, ") << measures
      << (measures == 1 ? " measure" : " measures") << "\n";
  if (parse_failed) return 2;
  if (validation_failed) return 3;
  return 0;
}

// ---------------------------------------------------------------------------
// featurize
// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::vector<std::string> patterns;
  std::optional<TabFormat> format;
  std::string out_path = "-";
};

/// Full extraction pipeline to a feature dump; label totals to stdout.
inline int cmd_featurize(const FeaturizeArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() {
    std::vector<std::string> paths = expand_globs(args.patterns);
    if (paths.empty()) {
      err << "error: no input files\n";
      return 2;
    }
    CorpusDerivation d = derive_corpus(load_corpus(paths, args.format));
    for (const std::string& w : d.warnings) err << "warning: " << w << "\n";
    write_output(args.out_path, serialize_dump(d.records), out);
    if (args.out_path != "-") out << render_label_counts(label_counts(d.labeled));
    return 0;
  });
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Instrumentation for the leakage check: identities of every record the
/// fitting stage was allowed to see.
struct TouchLog {
  std::vector<std::pair<std::string, std::size_t>> touched;
};

struct TrainOptions {
  std::string preset = "full";  // full | balanced | smote | forest
  std::uint64_t seed = 0;
  double test_fraction = 0.25;
  double tolerance = 0.02;
};

struct TrainOutput {
  Model model;
  std::size_t input_records = 0;
  std::size_t deduped_records = 0;
  SplitResult split;
  EvalReport train_report;
  EvalReport test_report;
  std::array<double, num_features> importances{};
  std::vector<std::string> warnings;
};

/// dedup -> track split -> preset-selected fit -> both-side evaluation.
/// The test partition never reaches the fitting stage; `touch`, when
/// given, records exactly what did.
inline TrainOutput train_pipeline(const std::vector<FeatureRecord>& records,
                                  const TrainOptions& options, TouchLog* touch = nullptr) {
  TrainOutput out;
  out.input_records = records.size();
  std::vector<FeatureRecord> unique = dedup_trackwise(records);
  out.deduped_records = unique.size();

  SplitSpec spec;
  spec.test_fraction = options.test_fraction;
  spec.imbalance_tolerance = options.tolerance;
  spec.seed = options.seed;
  out.split = split_by_track(unique, spec);
  if (out.split.warning) out.warnings.push_back(*out.split.warning);

  std::vector<FeatureRecord> fitting = out.split.train;
  if (touch)
    for (const FeatureRecord& r : fitting) touch->touched.emplace_back(r.track_id, r.event_index);

  if (options.preset == "full") {
    out.model.kind = ModelKind::tree;
    out.model.tree = fit_tree(fitting, TreeParams{});
  } else if (options.preset == "balanced") {
    TreeParams params;
    params.weighting = ClassWeighting::balanced;
    out.model.kind = ModelKind::tree;
    out.model.tree = fit_tree(fitting, params);
  } else if (options.preset == "smote") {
    SmoteParams sp;
    sp.k = 5;
    sp.target_ratio = 1.0;
    sp.seed = options.seed;
    std::vector<std::string> smote_warnings;
    fitting = smote(fitting, sp, &smote_warnings);
    for (const std::string& w : smote_warnings) out.warnings.push_back(w);
    out.model.kind = ModelKind::tree;
    out.model.tree = fit_tree(fitting, TreeParams{});
  } else if (options.preset == "forest") {
    ForestParams fp;
    fp.num_trees = 100;
    fp.seed = options.seed;
    out.model.kind = ModelKind::forest;
    out.model.forest = fit_forest(fitting, fp);
  } else {
    throw std::domain_error("unknown preset \"" + options.preset +
                            "\" (want full, balanced, smote, or forest)");
  }

  out.train_report = evaluate(out.model, out.split.train);
  out.test_report = evaluate(out.model, out.split.test);

  if (out.model.kind == ModelKind::tree) {
    out.importances = feature_importance(out.model.tree);
  } else {
    for (const Tree& t : out.model.forest.trees) {
      auto imp = feature_importance(t);
      for (std::size_t i = 0; i < num_features; ++i) out.importances[i] += imp[i];
    }
    double total = 0;
    for (double x : out.importances) total += x;
    if (total > 0)
      for (double& x : out.importances) x /= total;
  }
  return out;
}

inline std::string render_train_report(const TrainOutput& r) {
  using featex_detail::fmt_g;
  std::ostringstream os;
  os << "records: " << r.input_records << " read, " << r.deduped_records << " after dedup\n";
  os << "split: train " << r.split.train.size() << " records / " << r.split.train_tracks.size()
     << " tracks, test " << r.split.test.size() << " records / " << r.split.test_tracks.size()
     << " tracks\n";
  os << "split class gap: " << fmt_g(r.split.achieved_gap) << "\n";
  os << "\n== train ==\n" << render_confusion(r.train_report) << render_scores(r.train_report);
  os << "\n== test ==\n" << render_confusion(r.test_report) << render_scores(r.test_report);
  os << "\n== top features ==\nfeature\timportance\n";
  std::vector<std::size_t> order(num_features);
  for (std::size_t i = 0; i < num_features; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return r.importances[a] > r.importances[b];
  });
  for (std::size_t rank = 0; rank < 10 && rank < num_features; ++rank)
    os << feature_registry()[order[rank]].name << "\t" << fmt_g(r.importances[order[rank]])
       << "\n";
  return os.str();
}

struct TrainArgs {
  std::string dump_path;
  std::string preset = "full";
  std::uint64_t seed = 0;
  double test_fraction = 0.25;
  double tolerance = 0.02;
  std::string model_out;
};

inline int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err,
                     TouchLog* touch = nullptr) {
  return guarded(err, [&]() {
    std::vector<FeatureRecord> records = parse_dump(read_file(args.dump_path));
    TrainOptions options;
    options.preset = args.preset;
    options.seed = args.seed;
    options.test_fraction = args.test_fraction;
    options.tolerance = args.tolerance;
    TrainOutput result = train_pipeline(records, options, touch);
    for (const std::string& w : result.warnings) err << "warning: " << w << "\n";
    write_output(args.model_out, serialize_model(result.model), out);
    out << render_train_report(result);
    return 0;
  });
}

// ---------------------------------------------------------------------------
// annotate
// ---------------------------------------------------------------------------

struct AnnotateArgs {
  std::string input_path;
  std::string model_path;
  std::string out_path = "-";
  std::optional<TabFormat> format;
};

namespace cli_detail {

inline BendAnnotation bend_for_label(Label label) {
  BendAnnotation b;
  b.amplitude_qt = 4;  // amplitude is not predicted; a whole tone is the customary default
  switch (label) {
    case Label::up: b.kind = BendKind::basic; break;
    case Label::held: b.kind = BendKind::held; break;
    case Label::down: b.kind = BendKind::reverse; break;
    case Label::none: break;
  }
  return b;
}

}  // namespace cli_detail

/// Strips any existing bends, predicts a label per event, and writes the
/// tab back with a bend token on each event predicted as bent. Chords get
/// the bend on their lowest-numbered string, flagged in the output.
inline int cmd_annotate(const AnnotateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() {
    Model model = parse_model(read_file(args.model_path));
    std::string source = read_file(args.input_path);
    TabFormat fmt = args.format ? *args.format : detect_format(source);
    Score score = fmt == TabFormat::structured ? parse_structured(source) : parse_text(source);

    int stripped = strip_bends(score);
    if (stripped > 0)
      err << "warning: stripped " << stripped << " existing bend annotation"
          << (stripped == 1 ? "" : "s") << " before predicting\n";

    std::vector<std::string> notes;  // chord-placement flags
    std::vector<std::string> warnings;
    for (std::size_t ti = 0; ti < score.tracks.size(); ++ti) {
      Track& track = score.tracks[ti];
      TrackPipeline p =
          run_track_pipeline(track, make_track_id(args.input_path, ti), &warnings);
      for (std::size_t i = 0; i < p.records.size(); ++i) {
        Label label = predict(model, p.records[i].values);
        if (label == Label::none) continue;
        std::size_t orig = p.src_first.at(p.labeled[i].source_event);
        NoteEvent& ev = track.events[orig];
        auto lowest = std::min_element(
            ev.notes.begin(), ev.notes.end(),
            [](const Note& a, const Note& b) { return a.string < b.string; });
        lowest->bend = cli_detail::bend_for_label(label);
        if (ev.notes.size() > 1)
          notes.push_back("bend (" + std::string(label_name(label)) + ") placed on string " +
                          std::to_string(lowest->string) + " of a " +
                          std::to_string(ev.notes.size()) + "-note chord in track \"" +
                          track.name + "\" at onset " + ev.onset.str());
      }
    }
    for (const std::string& w : warnings) err << "warning: " << w << "\n";

    std::string rendered;
    if (fmt == TabFormat::text) {
      rendered = serialize_text(score);
      if (!notes.empty()) {
        // Keep the flags inside the file, as comments right after the header.
        std::size_t header_end = rendered.find('\n');
        std::string block;
        for (const std::string& n : notes) block += "# " + n + "\n";
        rendered.insert(header_end + 1, block);
      }
    } else {
      rendered = serialize_structured(score);
      for (const std::string& n : notes) err << "note: " << n << "\n";
    }
    write_output(args.out_path, rendered, out);
    return 0;
  });
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

struct ExplainArgs {
  std::string input_path;
  std::string model_path;
  std::vector<std::string> selectors;
  std::optional<TabFormat> format;
};

namespace cli_detail {

/// A selector is a bare record ordinal ("17") or "<track_id>:<event_index>"
/// split at the last colon.
inline std::vector<std::size_t> select_records(const std::vector<FeatureRecord>& records,
                                               const std::string& selector) {
  std::vector<std::size_t> hits;
  bool all_digits = !selector.empty() &&
                    selector.find_first_not_of("0123456789") == std::string::npos;
  if (all_digits) {
    std::size_t ordinal = std::stoull(selector);
    if (ordinal < records.size()) hits.push_back(ordinal);
    return hits;
  }
  std::size_t colon = selector.rfind(':');
  if (colon == std::string::npos || colon + 1 == selector.size()) return hits;
  std::string track_id = selector.substr(0, colon);
  std::string index_text = selector.substr(colon + 1);
  if (index_text.find_first_not_of("0123456789") != std::string::npos) return hits;
  std::size_t event_index = std::stoull(index_text);
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].track_id == track_id && records[i].event_index == event_index)
      hits.push_back(i);
  return hits;
}

}  // namespace cli_detail

/// Prints the root-to-leaf tests behind the prediction of the selected
/// event(s); with exactly two selections, also how many leading tests
/// their paths share.
inline int cmd_explain(const ExplainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() {
    Model model = parse_model(read_file(args.model_path));
    if (model.kind != ModelKind::tree)
      throw std::runtime_error("decision paths exist only for single-tree models");

    std::string source = read_file(args.input_path);
    std::vector<FeatureRecord> records;
    if (source.rfind("track_id\t", 0) == 0) {
      records = parse_dump(source);
    } else {
      TabFormat fmt = args.format ? *args.format : detect_format(source);
      Score score = fmt == TabFormat::structured ? parse_structured(source) : parse_text(source);
      for (std::size_t ti = 0; ti < score.tracks.size(); ++ti) {
        TrackPipeline p = run_track_pipeline(score.tracks[ti],
                                             make_track_id(args.input_path, ti), nullptr);
        records.insert(records.end(), p.records.begin(), p.records.end());
      }
    }
    if (args.selectors.empty()) throw SelectionError("no event selected (use --event)");

    std::vector<std::size_t> chosen;
    for (const std::string& sel : args.selectors) {
      std::vector<std::size_t> hits = cli_detail::select_records(records, sel);
      if (hits.empty()) throw SelectionError("selector \"" + sel + "\" matches no event");
      chosen.insert(chosen.end(), hits.begin(), hits.end());
    }

    using featex_detail::fmt_g;
    std::vector<std::vector<PathStep>> paths;
    for (std::size_t idx : chosen) {
      const FeatureRecord& rec = records[idx];
      std::vector<PathStep> path = decision_path(model.tree, rec.values);
      paths.push_back(path);
      Label predicted = predict(model.tree, rec.values);
      const TreeNode& leaf = model.tree.nodes[static_cast<std::size_t>(
          learn_detail::leaf_for(model.tree, rec.values))];

      out << "event " << rec.track_id << ":" << rec.event_index << "\n";
      out << "  true label: " << label_name(rec.label) << "\n";
      out << "  predicted: " << label_name(predicted) << "\n";
      out << "  leaf counts:";
      for (int c = 0; c < num_labels; ++c)
        out << " " << label_code(static_cast<Label>(c)) << "="
            << leaf.counts[static_cast<std::size_t>(c)];
      out << "\n";
      if (path.empty()) {
        out << "  path: (empty)\n";
      } else {
        out << "  path:\n";
        for (const PathStep& s : path)
          out << "    " << s.feature_name << " = " << fmt_g(s.value)
              << (s.went_left ? " <= " : " > ") << fmt_g(s.threshold) << " -> "
              << (s.went_left ? "left" : "right") << "\n";
      }
    }
    if (chosen.size() == 2) {
      std::size_t shared = 0;
      while (shared < paths[0].size() && shared < paths[1].size() &&
             paths[0][shared].node == paths[1][shared].node)
        ++shared;
      out << "shared path prefix: " << shared << (shared == 1 ? " test" : " tests") << "\n";
    }
    return 0;
  });
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsArgs {
  std::vector<std::string> patterns;
  std::optional<TabFormat> format;
  std::string out_dir = ".";
};

/// Label counts, both fretboard heatmaps (matrix and vector graphic), and
/// the four per-label distribution tables, written into out_dir.
inline int cmd_stats(const StatsArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() {
    std::vector<std::string> paths = expand_globs(args.patterns);
    if (paths.empty()) {
      err << "error: no input files\n";
      return 2;
    }
    CorpusDerivation d = derive_corpus(load_corpus(paths, args.format));
    for (const std::string& w : d.warnings) err << "warning: " << w << "\n";
    if (d.labeled.empty()) err << "warning: corpus has no events\n";

    namespace fs = std::filesystem;
    fs::create_directories(args.out_dir);
    auto emit = [&](const std::string& name, const std::string& content) {
      std::ofstream os(fs::path(args.out_dir) / name, std::ios::binary);
      if (!os) throw std::runtime_error("cannot write \"" + name + "\" in " + args.out_dir);
      os << content;
    };

    std::string counts = render_label_counts(label_counts(d.labeled));
    out << counts;
    emit("counts.tsv", counts);

    Heatmap all = fretboard_heatmap(d.labeled, HeatmapFilter::all);
    Heatmap bent = fretboard_heatmap(d.labeled, HeatmapFilter::bent_only);
    emit("heatmap_all.tsv", render_heatmap_tsv(all));
    emit("heatmap_all.svg", render_heatmap_svg(all, "All notes"));
    emit("heatmap_bent.tsv", render_heatmap_tsv(bent));
    emit("heatmap_bent.svg", render_heatmap_svg(bent, "Bent notes"));

    emit("dist_beat_strength.tsv",
         render_distribution(distribution(d.labeled, DistKind::beat_strength, true)));
    emit("dist_duration.tsv",
         render_distribution(distribution(d.labeled, DistKind::duration, true)));
    emit("dist_relative_duration.tsv",
         render_distribution(distribution(d.labeled, DistKind::relative_duration, true)));
    emit("dist_pitch.tsv", render_distribution(distribution(d.labeled, DistKind::pitch, true)));
    return 0;
  });
}

}  // namespace bendlab::cli
