// bendlab - guitar tablature bend analysis toolkit.
//
//   bendlab ingest    FILES...            parse + validate, print summaries
//   bendlab featurize FILES... --out F    write the feature dump
//   bendlab train     DUMP --seed N --out MODEL [--preset P]
//   bendlab annotate  TAB --model M --out F
//   bendlab explain   DUMP|TAB --model M --event SEL [--event SEL]
//   bendlab stats     FILES... --out DIR

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "bendlab/bendlab.hpp"

namespace {

std::optional<bendlab::TabFormat> format_of(const std::string& name, std::ostream& err) {
  try {
    return bendlab::cli::parse_format_name(name);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    std::exit(1);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"guitar tablature bend analysis toolkit"};
  app.require_subcommand(1);

  std::vector<std::string> patterns;
  std::string format_name;
  std::string out_path = "-";
  std::string out_dir = ".";
  std::string model_path;
  std::string preset = "full";
  std::uint64_t seed = 0;
  double test_fraction = 0.25;
  double tolerance = 0.02;
  std::vector<std::string> selectors;

  CLI::App* ingest = app.add_subcommand("ingest", "parse and validate tablature files");
  ingest->add_option("files", patterns, "input files or glob patterns")->required();
  ingest->add_option("--format", format_name, "text|structured (default: detect)");

  CLI::App* featurize = app.add_subcommand("featurize", "extract feature vectors");
  featurize->add_option("files", patterns, "input files or glob patterns")->required();
  featurize->add_option("--format", format_name, "text|structured (default: detect)");
  featurize->add_option("--out", out_path, "dump file path, - for stdout");

  CLI::App* train = app.add_subcommand("train", "fit a model from a feature dump");
  std::string dump_path;
  train->add_option("dump", dump_path, "feature dump file")->required();
  train->add_option("--seed", seed, "RNG seed (required; no silent default)")->required();
  train->add_option("--preset", preset, "full|balanced|smote|forest");
  train->add_option("--test-fraction", test_fraction, "held-out share (default 0.25)");
  train->add_option("--tolerance", tolerance, "class imbalance tolerance (default 0.02)");
  train->add_option("--out", out_path, "model file path")->required();

  CLI::App* annotate = app.add_subcommand("annotate", "predict bends onto a bend-less tab");
  std::string input_path;
  annotate->add_option("tab", input_path, "input tablature file")->required();
  annotate->add_option("--model", model_path, "model file")->required();
  annotate->add_option("--out", out_path, "output tab path, - for stdout");
  annotate->add_option("--format", format_name, "text|structured (default: detect)");

  CLI::App* explain = app.add_subcommand("explain", "show decision paths for events");
  explain->add_option("input", input_path, "feature dump or tablature file")->required();
  explain->add_option("--model", model_path, "model file (single tree)")->required();
  explain->add_option("--event", selectors,
                      "event selector: record ordinal, or <track_id>:<event_index>");
  explain->add_option("--format", format_name, "text|structured (default: detect)");

  CLI::App* stats = app.add_subcommand("stats", "corpus statistics bundle");
  stats->add_option("files", patterns, "input files or glob patterns")->required();
  stats->add_option("--format", format_name, "text|structured (default: detect)");
  stats->add_option("--out", out_dir, "output directory (default .)");

  CLI11_PARSE(app, argc, argv);

  using namespace bendlab::cli;
  if (ingest->parsed()) {
    IngestArgs args{patterns, format_of(format_name, std::cerr)};
    return cmd_ingest(args, std::cout, std::cerr);
  }
  if (featurize->parsed()) {
    FeaturizeArgs args{patterns, format_of(format_name, std::cerr), out_path};
    return cmd_featurize(args, std::cout, std::cerr);
  }
  if (train->parsed()) {
    TrainArgs args;
    args.dump_path = dump_path;
    args.preset = preset;
    args.seed = seed;
    args.test_fraction = test_fraction;
    args.tolerance = tolerance;
    args.model_out = out_path;
    if (args.model_out == "-") {
      std::cerr << "error: train needs --out with a model file path\n";
      return 1;
    }
    return cmd_train(args, std::cout, std::cerr);
  }
  if (annotate->parsed()) {
    AnnotateArgs args{input_path, model_path, out_path, format_of(format_name, std::cerr)};
    return cmd_annotate(args, std::cout, std::cerr);
  }
  if (explain->parsed()) {
    ExplainArgs args{input_path, model_path, selectors, format_of(format_name, std::cerr)};
    return cmd_explain(args, std::cout, std::cerr);
  }
  if (stats->parsed()) {
    StatsArgs args{patterns, format_of(format_name, std::cerr), out_dir};
    return cmd_stats(args, std::cout, std::cerr);
  }
  return 1;
}
