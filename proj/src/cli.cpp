#include "telscope/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "telscope/attribution.hpp"
#include "telscope/errors.hpp"
#include "telscope/pipeline.hpp"
#include "telscope/report.hpp"
#include "telscope/synth.hpp"

namespace telscope::cli {

namespace {

namespace fs = std::filesystem;

// Failure mapped straight to an exit code.
struct Exit {
  int code;
  std::string message;
};

std::ifstream open_input(const std::string& path, const char* what, int code_if_missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Exit{code_if_missing, std::string("cannot read ") + what + " '" + path + "'"};
  return in;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Exit{kIoError, "cannot create '" + dir.string() + "': " + ec.message()};
}

template <typename Writer>
void write_output(const fs::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Exit{kIoError, "cannot write '" + path.string() + "'"};
  writer(out);
  if (!out) throw Exit{kIoError, "failed writing '" + path.string() + "'"};
}

int cmd_synth(const std::string& config_path, const std::string& out_dir, std::ostream& out) {
  auto in = open_input(config_path, "synth config", kUsageError);
  SynthConfig config;
  try {
    config = parse_synth_config(in);
  } catch (const Error& e) {
    throw Exit{kUsageError, "synth config '" + config_path + "': " + e.what()};
  }
  const SynthResult result = generate(config);
  const fs::path dir(out_dir);
  ensure_dir(dir);
  write_output(dir / "telemetry.csv", [&](std::ostream& o) { write_csv(o, result.frame); });
  write_output(dir / "roles.json", [&](std::ostream& o) { write_roles(o, result.frame.roles()); });
  write_output(dir / "truth.json", [&](std::ostream& o) { write_truth_json(o, result); });
  out << "wrote " << result.frame.length() << " rows x " << result.frame.channels().size() << " channels to "
      << (dir / "telemetry.csv").string() << '\n';
  return kOk;
}

struct RunArgs {
  std::string data;
  std::string roles;
  std::string config;
  std::string out;
  std::vector<std::string> params;
  int jobs = 1;
};

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  PipelineConfig config;
  if (!args.config.empty()) {
    auto in = open_input(args.config, "pipeline config", kUsageError);
    try {
      config = parse_pipeline_config(in);
    } catch (const Error& e) {
      throw Exit{kUsageError, "pipeline config '" + args.config + "': " + e.what()};
    }
  }
  Roles roles;
  {
    auto in = open_input(args.roles, "roles file", kUsageError);
    try {
      roles = parse_roles(in);
    } catch (const Error& e) {
      throw Exit{kUsageError, "roles '" + args.roles + "': " + e.what()};
    }
  }
  auto data = open_input(args.data, "telemetry CSV", kIoError);
  const TelemetryFrame frame = [&] {
    try {
      return parse_csv(data, roles);
    } catch (const Error& e) {
      throw Exit{kUsageError, "telemetry '" + args.data + "': " + e.what()};
    }
  }();
  for (const auto& p : args.params) {
    const Channel* ch = frame.find(p);
    if (ch == nullptr) throw Exit{kUsageError, "unknown parameter '" + p + "'"};
    if (ch->role != Role::target) throw Exit{kUsageError, "'" + p + "' is not a target"};
  }

  const auto outcomes = run_all(frame, config, args.params, args.jobs);
  const fs::path dir(args.out);
  ensure_dir(dir);
  bool all_ok = true;
  for (const auto& o : outcomes) {
    if (!o.ok()) {
      all_ok = false;
      err << o.parameter << ": FAILED: " << o.error << '\n';
      continue;
    }
    try {
      emit_report(*o.report, dir);
    } catch (const IoError& e) {
      throw Exit{kIoError, e.what()};
    }
    const ParameterReport& r = *o.report;
    out << r.parameter << ':';
    if (!r.spans.empty()) {
      const auto& top = r.spans.front();
      out << " top span " << format_iso8601(top.span.start) << " .. " << format_iso8601(top.span.end)
          << " mean score " << format_real(top.span.mean_score) << "; top covariates";
      for (std::size_t i = 0; i < std::min<std::size_t>(3, top.importance.size()); ++i) {
        out << (i ? ", " : " ") << top.importance[i].feature;
      }
    } else {
      out << " no spans";
    }
    out << '\n';
  }
  return all_ok ? kOk : kPartialFailure;
}

AnomalySpan parse_span_flag(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw Exit{kUsageError, "--span expects START,END"};
  try {
    const Timestamp start = parse_iso8601(text.substr(0, comma));
    const Timestamp end = parse_iso8601(text.substr(comma + 1));
    if (!(start < end)) throw Exit{kUsageError, "--span START must precede END"};
    return AnomalySpan{start, end, 0.0, 1, 0};
  } catch (const SchemaError& e) {
    throw Exit{kUsageError, std::string("--span: ") + e.what()};
  }
}

int cmd_explain(const std::string& model_path, const std::string& rows_path, const std::string& span_text,
                const std::string& out_dir, std::ostream& out) {
  const AnomalySpan span = parse_span_flag(span_text);
  auto model_in = open_input(model_path, "model", kIoError);
  auto rows_in = open_input(rows_path, "feature rows", kIoError);
  TreeEnsemble model;
  FeatureMatrix rows;
  AttributionMatrix attr;
  try {
    model = load_model(model_in);
    rows = parse_feature_csv(rows_in);
    if (rows.column_names != std::vector<std::string>(model.feature_names().begin(), model.feature_names().end())) {
      throw SchemaError("feature columns do not match the model's feature names");
    }
    attr = window_attribution(model, rows, span);
  } catch (const Error& e) {
    throw Exit{kUsageError, e.what()};
  }
  const fs::path dir(out_dir);
  ensure_dir(dir);
  write_output(dir / "attribution.csv", [&](std::ostream& o) { write_attribution_csv(o, attr); });
  write_output(dir / "importance.json", [&](std::ostream& o) { write_importance_json(o, importance_summary(attr)); });
  out << "attributed " << attr.rows() << " rows to " << (dir / "attribution.csv").string() << '\n';
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Telemetry anomaly detection and attribution"};
  app.require_subcommand(0, 1);
  bool show_version = false;
  app.add_flag("--version", show_version, "Print the version and exit");

  std::string synth_config, synth_out;
  auto* synth = app.add_subcommand("synth", "Generate synthetic telemetry with injected anomalies");
  synth->add_option("--config", synth_config, "Synth config JSON")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();

  RunArgs run_args;
  auto* runc = app.add_subcommand("run", "Run the two-model pipeline and write reports");
  runc->add_option("--data", run_args.data, "Telemetry CSV")->required();
  runc->add_option("--roles", run_args.roles, "Roles JSON")->required();
  runc->add_option("--config", run_args.config, "Pipeline config JSON");
  runc->add_option("--out", run_args.out, "Report directory")->required();
  runc->add_option("--params", run_args.params, "Targets to process (default: all)")->delimiter(',');
  runc->add_option("--jobs", run_args.jobs, "Parallel parameter runs")->check(CLI::PositiveNumber);

  std::string model_path, rows_path, span_text, explain_out;
  auto* explain = app.add_subcommand("explain", "Attribute a saved model's predictions over a time span");
  explain->add_option("--model", model_path, "Model JSON")->required();
  explain->add_option("--rows", rows_path, "Feature CSV")->required();
  explain->add_option("--span", span_text, "START,END in ISO-8601 UTC")->required();
  explain->add_option("--out", explain_out, "Output directory")->required();

  auto* version = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << app.help();
    return kUsageError;
  }

  try {
    if (show_version || version->parsed()) {
      out << "telscope " << kVersion << '\n';
      return kOk;
    }
    if (synth->parsed()) return cmd_synth(synth_config, synth_out, out);
    if (runc->parsed()) return cmd_run(run_args, out, err);
    if (explain->parsed()) {
      try {
        return cmd_explain(model_path, rows_path, span_text, explain_out, out);
      } catch (const Exit& e) {
        if (e.code == kUsageError) err << e.message << '\n' << explain->help();
        else err << e.message << '\n';
        return e.code;
      }
    }
    err << app.help();
    return kUsageError;
  } catch (const Exit& e) {
    err << e.message << '\n';
    return e.code;
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
    return kUsageError;
  } catch (const IoError& e) {
    err << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << e.what() << '\n';
    return kPartialFailure;
  }
}

}  // namespace telscope::cli
