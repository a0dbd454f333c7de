#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "skinnet/dataset.hpp"
#include "skinnet/metrics.hpp"
#include "skinnet/network.hpp"
#include "skinnet/trainer.hpp"
#include "skinnet/weights_io.hpp"

namespace skinnet::cli {

namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kData: return kExitData;
    case ErrorKind::kNumeric: return kExitNumeric;
    case ErrorKind::kArchive:
    case ErrorKind::kShape: return kExitArchive;
    case ErrorKind::kIo: return kExitWrite;
  }
  return kExitConfig;
}

namespace {

struct RunConfig {
  std::string data_dir;
  std::string out_dir = "skinnet_out";
  std::string report_dir;
  std::string weights_in;
  std::string model;
  std::string image;
  bool freeze_base = true;
  HyperParams hp;
  AugmentConfig augment;
  bool no_augment = false;
  std::string normalization = "scale01";
  std::size_t input_size = 150;
  std::size_t width_divisor = 1;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string quote_value(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + '"';
}

std::string num(double v) {
  char buf[32];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

using Settings = std::vector<std::pair<std::string, std::string>>;

// Printed in the same key=value form --config accepts.
void echo(std::ostream& out, const std::string& command, const Settings& kv) {
  out << "# skinnet " << command << " resolved configuration\n";
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  out << "# end configuration\n";
}

void add_hyper_options(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--epochs", c.hp.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", c.hp.batch_size, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--lr", c.hp.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--seed", c.hp.seed, "Seed for every stochastic choice")->capture_default_str();
}

void add_arch_options(CLI::App* cmd, RunConfig& c) {
  cmd->add_option("--input-size", c.input_size, "Square input side in pixels")->capture_default_str();
  cmd->add_option("--width-divisor", c.width_divisor, "Divide every layer width (small test networks)")
      ->capture_default_str();
}

ArchiveMetadata metadata_for(const RunConfig& c, const DatasetIndex& index) {
  ArchiveMetadata m;
  m.normalization = to_string(parse_normalization(c.normalization));
  m.class_names = index.class_names;
  m.input_size = c.input_size;
  m.width_divisor = c.width_divisor;
  m.num_classes = index.num_classes();
  return m;
}

int cmd_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  echo(out, "train",
       Settings{{"data-dir", quote_value(c.data_dir)},
        {"out", quote_value(c.out_dir)},
        {"weights-in", quote_value(c.weights_in)},
        {"freeze-base", c.freeze_base ? "true" : "false"},
        {"epochs", std::to_string(c.hp.epochs)},
        {"batch-size", std::to_string(c.hp.batch_size)},
        {"lr", num(c.hp.learning_rate)},
        {"seed", std::to_string(c.hp.seed)},
        {"normalization", quote_value(c.normalization)},
        {"no-augment", c.no_augment ? "true" : "false"},
        {"rotation-deg", num(c.augment.rotation_max_deg)},
        {"shift-frac", num(c.augment.shift_max_frac)},
        {"zoom-frac", num(c.augment.zoom_max_frac)},
        {"input-size", std::to_string(c.input_size)},
        {"width-divisor", std::to_string(c.width_divisor)}});
  out << "# optimizer: Adam beta1=" << num(c.hp.beta1) << " beta2=" << num(c.hp.beta2) << " epsilon=" << num(c.hp.epsilon)
      << '\n';

  c.hp.validate();
  AugmentConfig augment = c.augment;
  augment.enabled = !c.no_augment;
  augment.validate();
  const Normalization norm = parse_normalization(c.normalization);

  const auto index = scan_dataset(c.data_dir);
  out << "dataset: " << index.num_classes() << " classes, " << index.count(Split::kTrain) << " train / "
      << index.count(Split::kTest) << " test images\n";

  ArchConfig arch;
  arch.num_classes = index.num_classes();
  arch.input_size = c.input_size;
  arch.width_divisor = c.width_divisor;
  auto graph = NetworkGraph<float>::build(arch);

  const Rng root(c.hp.seed);
  Rng head_rng = root.fork("init_head");
  graph.init_head(head_rng);
  if (!c.weights_in.empty()) {
    load_weights(fs::path(c.weights_in), graph, LoadScope::kBaseOnly);
    out << "loaded convolutional base from " << c.weights_in << '\n';
  } else {
    Rng base_rng = root.fork("init_base");
    graph.init_base(base_rng);
    if (c.freeze_base)
      err << "warning: --freeze-base without --weights-in trains the head on a randomly initialized frozen base\n";
  }
  graph.set_trainable(c.freeze_base);
  out << "trainable parameters: " << graph.parameter_count(ParamGroup::kTrainable) << " of "
      << graph.parameter_count(ParamGroup::kAll) << '\n';

  TrainOptions opts;
  opts.checkpoint_dir = c.out_dir;
  opts.augment = augment;
  opts.loader = {c.input_size, norm};
  opts.metadata = metadata_for(c, index);
  opts.on_epoch = [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << '/' << c.hp.epochs << "  loss " << fmt("%.4f", r.loss) << "  acc "
        << fmt("%.4f", r.accuracy) << "  (" << fmt("%.1f", r.seconds) << "s)" << std::endl;
  };
  train(graph, index, c.hp, opts);
  out << "wrote " << (fs::path(c.out_dir) / "final.wts").string() << '\n';
  return kExitOk;
}

struct LoadedModel {
  NetworkGraph<float> graph;
  ArchiveMetadata metadata;
};

LoadedModel load_model(const std::string& path) {
  const auto archive = read_archive(path);
  auto graph = NetworkGraph<float>::build(arch_from_metadata(archive.metadata));
  load_weights(archive, graph, LoadScope::kAll);
  auto meta = archive.metadata;
  if (meta.class_names.empty())
    for (std::size_t i = 0; i < graph.config().num_classes; ++i) meta.class_names.push_back("class" + std::to_string(i));
  if (meta.class_names.size() != graph.config().num_classes)
    fail(ErrorKind::kArchive, "archive lists " + std::to_string(meta.class_names.size()) + " class names for " +
                                  std::to_string(graph.config().num_classes) + " outputs");
  return {std::move(graph), std::move(meta)};
}

int cmd_evaluate(const RunConfig& c, std::ostream& out) {
  std::string out_dir = c.report_dir.empty() ? fs::path(c.model).parent_path().string() : c.report_dir;
  if (out_dir.empty()) out_dir = ".";
  echo(out, "evaluate",
       Settings{{"model", quote_value(c.model)},
        {"data-dir", quote_value(c.data_dir)},
        {"out", quote_value(out_dir)},
        {"batch-size", std::to_string(c.hp.batch_size)}});

  const auto model = load_model(c.model);
  const auto index = scan_dataset(c.data_dir);
  if (index.class_names != model.metadata.class_names) {
    std::string have, want;
    for (const auto& n : index.class_names) have += " " + n;
    for (const auto& n : model.metadata.class_names) want += " " + n;
    fail(ErrorKind::kArchive, "dataset classes [" + have + " ] do not match model classes [" + want + " ]");
  }
  const LoaderOptions loader{model.graph.config().input_size, parse_normalization(model.metadata.normalization)};
  out << "normalization: " << model.metadata.normalization << ", input " << loader.image_size << "x"
      << loader.image_size << '\n';

  const auto pred = predict_split(model.graph, index, Split::kTest, loader, c.hp.batch_size);
  std::vector<std::size_t> predicted(pred.labels.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) predicted[i] = argmax_row(pred.probs, i);

  const auto cm = confusion(pred.labels, predicted, index.num_classes(), index.class_names);
  const auto rep = report(cm);
  const TensorD scores = pred.probs.cast<double>();
  std::vector<RocCurve> curves;
  for (std::size_t k = 0; k < index.num_classes(); ++k)
    curves.push_back(roc_auc(pred.labels, scores, k, index.class_names[k]));

  emit_report(rep, cm, curves, ReportFormat::kJson, out_dir);
  emit_report(rep, cm, curves, ReportFormat::kCsv, out_dir);

  out << '\n' << format_report(rep) << '\n';
  out << "accuracy: " << fmt("%.4f", rep.accuracy) << '\n';
  for (const auto& curve : curves) out << "auc " << curve.class_name << ": " << fmt("%.4f", curve.auc) << '\n';
  out << "\nconfusion matrix (rows true, columns predicted):\n";
  for (std::size_t i = 0; i < cm.size(); ++i) {
    out << cm.class_names[i] << ':';
    for (auto v : cm.counts[i]) out << ' ' << v;
    out << '\n';
  }
  if (rep.zero_division()) out << "note: some metrics had a zero denominator and were reported as 0\n";
  out << "wrote report.json, report.csv, confusion.csv and " << curves.size() << " ROC files to " << out_dir << '\n';
  return kExitOk;
}

int cmd_predict(const RunConfig& c, std::ostream& out) {
  echo(out, "predict", Settings{{"model", quote_value(c.model)}, {"image", quote_value(c.image)}});
  const auto model = load_model(c.model);
  const auto& cfg = model.graph.config();
  Tensor px = load_pixels(c.image, parse_normalization(model.metadata.normalization), cfg.input_size);
  const Tensor probs = model.graph.forward(px.reshaped({1, 3, cfg.input_size, cfg.input_size}), Mode::kEval);
  const std::size_t best = argmax_row(probs, 0);
  out << "predicted: " << model.metadata.class_names[best] << '\n';
  for (std::size_t k = 0; k < cfg.num_classes; ++k)
    out << "  " << model.metadata.class_names[k] << ": " << fmt("%.4f", probs.at(0, k)) << '\n';
  return kExitOk;
}

// Expands `--config FILE` into flags placed ahead of the command-line flags,
// so explicit flags win under the take-last policy.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<std::string> file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) fail(ErrorKind::kConfig, "--config needs a file path");
      file = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!file) return rest;
  if (!fs::is_regular_file(*file)) fail(ErrorKind::kConfig, "config file " + *file + " not found");
  if (rest.empty() || rest.front().rfind("-", 0) == 0) fail(ErrorKind::kConfig, "--config needs a command");

  std::vector<std::string> from_file;
  try {
    for (const auto& item : CLI::ConfigINI().from_file(*file)) {
      if (item.name == "++" || item.name == "--") continue;
      if (!item.parents.empty() && item.parents.front() != rest.front()) continue;
      std::string value;
      for (std::size_t k = 0; k < item.inputs.size(); ++k) value += (k ? "," : "") + item.inputs[k];
      if (value.empty()) continue;  // unset
      from_file.push_back("--" + item.name + "=" + value);
    }
  } catch (const CLI::Error& e) {
    fail(ErrorKind::kConfig, std::string("cannot parse config file: ") + e.what());
  }
  std::vector<std::string> out{rest.front()};
  out.insert(out.end(), from_file.begin(), from_file.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Skin disease classification with a modified VGG16 (train, evaluate, predict)", "skinnet"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", "skinnet 1.0");
  app.footer(
      "Exit codes: 0 ok, 1 configuration error, 2 data error, 3 numeric abort, 4 archive mismatch, 5 write failure.\n"
      "Options may also come from --config FILE (key=value lines, optional [command] sections); explicit flags win.");

  auto* train_cmd = app.add_subcommand("train", "Train the network and write checkpoints, final.wts and train_log.jsonl");
  train_cmd->add_option("--data-dir", c.data_dir, "Dataset root with train/ and test/")->required();
  train_cmd->add_option("--out", c.out_dir, "Output directory")->capture_default_str();
  train_cmd->add_option("--weights-in", c.weights_in, "Archive with pretrained convolutional base weights");
  train_cmd->add_flag("--freeze-base,!--no-freeze-base", c.freeze_base, "Keep the convolutional base fixed (default)");
  add_hyper_options(train_cmd, c);
  train_cmd->add_option("--normalization", c.normalization, "Pixel normalization")
      ->capture_default_str()
      ->check(CLI::IsMember({"scale01", "imagenet", "imagenet_mean"}));
  train_cmd->add_flag("--no-augment", c.no_augment, "Disable rotation/shift/zoom augmentation");
  train_cmd->add_option("--rotation-deg", c.augment.rotation_max_deg, "Max rotation in degrees")->capture_default_str();
  train_cmd->add_option("--shift-frac", c.augment.shift_max_frac, "Max shift as a fraction of size")->capture_default_str();
  train_cmd->add_option("--zoom-frac", c.augment.zoom_max_frac, "Max zoom deviation")->capture_default_str();
  add_arch_options(train_cmd, c);

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a model on the test split and write reports");
  eval_cmd->add_option("--model", c.model, "Model archive")->required();
  eval_cmd->add_option("--data-dir", c.data_dir, "Dataset root with train/ and test/")->required();
  eval_cmd->add_option("--out", c.report_dir, "Report directory (default: the model's directory)");
  eval_cmd->add_option("--batch-size", c.hp.batch_size, "Inference batch size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* predict_cmd = app.add_subcommand("predict", "Classify one image");
  predict_cmd->add_option("--model", c.model, "Model archive")->required();
  predict_cmd->add_option("--image,image", c.image, "Image file (JPEG or PNG)")->required();

  try {
    auto argv = expand_config(args);
    std::reverse(argv.begin(), argv.end());
    try {
      app.parse(argv);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        // help or version
        app.exit(e, out, err);
        return kExitOk;
      }
      err << "error: " << e.what() << "\nRun with --help for more information.\n";
      return kExitConfig;
    }
    if (train_cmd->parsed()) return cmd_train(c, out, err);
    if (eval_cmd->parsed()) return cmd_evaluate(c, out);
    if (predict_cmd->parsed()) return cmd_predict(c, out);
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitWrite;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace skinnet::cli
