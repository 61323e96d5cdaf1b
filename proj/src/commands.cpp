#include "stib/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "json.hpp"
#include "stib/runio.hpp"
#include "stib/version.hpp"

namespace stib {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void require_finite_metrics(const Metrics& m) {
  if (!std::isfinite(m.mae_x) || !std::isfinite(m.mae_y) ||
      !std::isfinite(m.mi_gauss_bits) || !std::isfinite(m.mi_ksg_bits))
    throw Error("metrics contain non-finite values");
}

}  // namespace

std::uint64_t heldout_seed(std::int64_t train_seed) {
  // Fixed offset stream; distinct from every training stream.
  return splitmix64(static_cast<std::uint64_t>(train_seed) ^
                    0x7465737464726177ull);  // "testdraw"
}

void cmd_gen(const GenArgs& args) {
  if (args.n < 1) throw DomainError("gen: --n must be >= 1");
  if (args.out.empty()) throw DomainError("gen: --out is required");

  SpiralConfig cfg;
  cfg.n = args.n;
  cfg.seed = args.seed;
  cfg.noise_enabled = args.noise;
  const Dataset ds = gen_spiral(cfg);
  save_csv(ds, args.out);

  json side;
  side["tool_version"] = kToolVersion;
  side["seed"] = args.seed;
  side["n"] = args.n;
  side["noise"] = args.noise;
  side["rows"] = ds.rows();
  side["dataset_fingerprint"] = dataset_fingerprint(ds);
  write_text_file(args.out + ".manifest.json", side.dump(2) + "\n");
}

void cmd_train(const TrainArgs& args) {
  if (args.config.empty() || args.data.empty() || args.model.empty() ||
      args.metrics.empty())
    throw DomainError("train: --config, --data, --model and --metrics are required");

  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig cfg = load_train_config(args.config);
  const Dataset train = load_csv(args.data);

  Dataset test;
  if (!args.test.empty()) {
    test = load_csv(args.test);
  } else {
    SpiralConfig sc;
    sc.n = kDefaultTestSize;
    sc.seed = heldout_seed(cfg.seed);
    test = gen_spiral(sc);
  }

  FitResult fitres = fit(cfg, train);
  const Metrics metrics = evaluate(fitres.params, cfg, test);
  require_finite_metrics(metrics);

  save_params(fitres.params, cfg, args.model);

  RunManifest m;
  m.config = cfg;
  m.dataset_fingerprint = dataset_fingerprint(train);
  m.metrics = metrics;
  m.trace = std::move(fitres.trace);
  m.wall_clock_seconds = seconds_since(t0);
  save_manifest(m, args.metrics);
}

void cmd_eval(const EvalArgs& args) {
  if (args.model.empty() || args.data.empty() || args.metrics.empty())
    throw DomainError("eval: --model, --data and --metrics are required");

  const auto t0 = std::chrono::steady_clock::now();
  auto [params, cfg] = load_params(args.model);
  const Dataset data = load_csv(args.data);
  const Metrics metrics = evaluate(params, cfg, data);
  require_finite_metrics(metrics);

  RunManifest m;
  m.config = cfg;
  m.dataset_fingerprint = dataset_fingerprint(data);
  m.metrics = metrics;
  m.wall_clock_seconds = seconds_since(t0);
  save_manifest(m, args.metrics);
}

void cmd_traverse(const TraverseArgs& args) {
  if (args.model.empty() || args.data.empty() || args.out.empty())
    throw DomainError("traverse: --model, --data and --out are required");

  auto [params, cfg] = load_params(args.model);
  const Dataset data = load_csv(args.data);
  if (args.index >= data.rows())
    throw DomainError("traverse: --index " + std::to_string(args.index) +
                      " out of range for " + std::to_string(data.rows()) + " rows");
  const Matrix anchor = row(data.x, args.index);
  const TraverseTable table =
      traverse_z0(params, cfg, anchor, args.lo, args.hi, args.steps);

  std::string out = "t";
  for (std::size_t j = 0; j < table.xhat.cols; ++j)
    out += ",xhat" + std::to_string(j);
  for (std::size_t j = 0; j < table.yhat.cols; ++j)
    out += ",yhat" + std::to_string(j);
  for (std::size_t j = 0; j < table.ydec.cols; ++j)
    out += ",ydec" + std::to_string(j);
  out += '\n';
  char buf[32];
  auto put = [&out, &buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += ',';
    out += buf;
  };
  for (std::size_t i = 0; i < table.t.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", table.t[i]);
    out += buf;
    for (std::size_t j = 0; j < table.xhat.cols; ++j) put(table.xhat(i, j));
    for (std::size_t j = 0; j < table.yhat.cols; ++j) put(table.yhat(i, j));
    for (std::size_t j = 0; j < table.ydec.cols; ++j) put(table.ydec(i, j));
    out += '\n';
  }
  write_text_file(args.out, out);
}

std::string render_report(const std::vector<std::string>& metrics_files) {
  struct Row {
    std::string model;
    double mae_x, mae_y, mi_ksg;
  };
  std::vector<Row> rows;
  for (const std::string& path : metrics_files) {
    const RunManifest m = load_manifest(path);
    rows.push_back({mode_name(m.config.mode), m.metrics.mae_x, m.metrics.mae_y,
                    m.metrics.mi_ksg_bits});
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.mi_ksg > b.mi_ksg; });

  std::string out;
  out += "model            mae_x     mae_y  mi_ksg_bits\n";
  out += "-----------  ---------  --------  -----------\n";
  for (const Row& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-11s  %9.4f  %8.4f  %11.4f\n",
                  r.model.c_str(), r.mae_x, r.mae_y, r.mi_ksg);
    out += buf;
  }
  return out;
}

void cmd_report(const ReportArgs& args) {
  if (args.metrics_files.empty())
    throw DomainError("report: at least one --metrics file is required");
  const std::string table = render_report(args.metrics_files);
  if (args.out.empty())
    std::cout << table;
  else
    write_text_file(args.out, table);
}

}  // namespace stib
