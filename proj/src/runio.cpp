#include "stib/runio.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "stib/version.hpp"

namespace stib {

using nlohmann::json;

namespace {

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {
      "d_x",       "d_y",        "d_z0",        "d_z1",
      "hidden_layers", "hidden_width", "activation", "lambda",
      "beta",      "jitter",     "lr_main",     "lr_adv",
      "batch_size", "epochs",    "adv_steps_per_main", "mode",
      "seed",      "kraskov_k"};
  return keys;
}

std::size_t get_count(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ParseError(std::string("config: \"") + key +
                     "\" must be a nonnegative integer");
  return v.get<std::size_t>();
}

double get_real(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!v.is_number())
    throw ParseError(std::string("config: \"") + key + "\" must be a number");
  return v.get<double>();
}

}  // namespace

TrainConfig parse_train_config(const std::string& json_text) try {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("config: top level must be an object");

  for (const auto& item : j.items())
    if (!config_keys().count(item.key()))
      throw ParseError("config: unknown key \"" + item.key() + "\"");
  for (const std::string& key : config_keys())
    if (!j.contains(key))
      throw ParseError("config: missing key \"" + key + "\"");

  TrainConfig c;
  c.d_x = get_count(j, "d_x");
  c.d_y = get_count(j, "d_y");
  c.d_z0 = get_count(j, "d_z0");
  c.d_z1 = get_count(j, "d_z1");
  c.hidden_layers = get_count(j, "hidden_layers");
  c.hidden_width = get_count(j, "hidden_width");
  c.activation = activation_from_name(j.at("activation").get<std::string>());
  c.lambda = get_real(j, "lambda");
  c.beta = get_real(j, "beta");
  c.jitter = get_real(j, "jitter");
  c.lr_main = get_real(j, "lr_main");
  c.lr_adv = get_real(j, "lr_adv");
  c.batch_size = get_count(j, "batch_size");
  c.epochs = get_count(j, "epochs");
  c.adv_steps_per_main = get_count(j, "adv_steps_per_main");
  c.mode = mode_from_name(j.at("mode").get<std::string>());
  if (!j.at("seed").is_number_integer())
    throw ParseError("config: \"seed\" must be an integer");
  c.seed = j.at("seed").get<std::int64_t>();
  c.kraskov_k = static_cast<int>(get_count(j, "kraskov_k"));
  c.validate();
  return c;
} catch (const json::exception& e) {
  throw ParseError(std::string("config: ") + e.what());
}

TrainConfig load_train_config(const std::string& path) {
  return parse_train_config(read_text_file(path));
}

static json config_to_json_obj(const TrainConfig& c) {
  json j;
  j["d_x"] = c.d_x;
  j["d_y"] = c.d_y;
  j["d_z0"] = c.d_z0;
  j["d_z1"] = c.d_z1;
  j["hidden_layers"] = c.hidden_layers;
  j["hidden_width"] = c.hidden_width;
  j["activation"] = activation_name(c.activation);
  j["lambda"] = c.lambda;
  j["beta"] = c.beta;
  j["jitter"] = c.jitter;
  j["lr_main"] = c.lr_main;
  j["lr_adv"] = c.lr_adv;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["adv_steps_per_main"] = c.adv_steps_per_main;
  j["mode"] = mode_name(c.mode);
  j["seed"] = c.seed;
  j["kraskov_k"] = c.kraskov_k;
  return j;
}

std::string train_config_to_json(const TrainConfig& cfg) {
  return config_to_json_obj(cfg).dump(2) + "\n";
}

namespace {

json payload_to_json(const RunManifest& m) {
  json j;
  j["tool_version"] = kToolVersion;
  j["seed"] = m.config.seed;
  j["config"] = config_to_json_obj(m.config);
  j["dataset_fingerprint"] = m.dataset_fingerprint;
  j["metrics"] = {{"mae_x", m.metrics.mae_x},
                  {"mae_y", m.metrics.mae_y},
                  {"mi_gauss_bits", m.metrics.mi_gauss_bits},
                  {"mi_ksg_bits", m.metrics.mi_ksg_bits}};
  json traces = json::object();
  std::vector<double> lm, la, mx, my;
  for (const EpochTrace& t : m.trace) {
    lm.push_back(t.loss_main);
    la.push_back(t.loss_adv);
    mx.push_back(t.mae_x);
    my.push_back(t.mae_y);
  }
  traces["loss_main"] = lm;
  traces["loss_adv"] = la;
  traces["mae_x"] = mx;
  traces["mae_y"] = my;
  j["trace"] = traces;
  return j;
}

}  // namespace

std::string manifest_payload(const RunManifest& m) {
  return payload_to_json(m).dump(2);
}

void save_manifest(const RunManifest& m, const std::string& path) {
  json j;
  j["payload"] = payload_to_json(m);
  j["wall_clock_seconds"] = m.wall_clock_seconds;
  write_text_file(path, j.dump(2) + "\n");
}

RunManifest load_manifest(const std::string& path) try {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("manifest " + path + ": invalid JSON: " + e.what());
  }
  if (!j.contains("payload"))
    throw ParseError("manifest " + path + ": missing payload object");
  const json& p = j["payload"];
  RunManifest m;
  m.config = parse_train_config(p.at("config").dump());
  m.dataset_fingerprint = p.at("dataset_fingerprint").get<std::uint64_t>();
  m.metrics.mae_x = p.at("metrics").at("mae_x").get<double>();
  m.metrics.mae_y = p.at("metrics").at("mae_y").get<double>();
  m.metrics.mi_gauss_bits = p.at("metrics").at("mi_gauss_bits").get<double>();
  m.metrics.mi_ksg_bits = p.at("metrics").at("mi_ksg_bits").get<double>();
  if (p.contains("trace")) {
    const json& tr = p["trace"];
    const auto& lm = tr.at("loss_main");
    const auto& la = tr.at("loss_adv");
    const auto& mx = tr.at("mae_x");
    const auto& my = tr.at("mae_y");
    for (std::size_t i = 0; i < lm.size(); ++i) {
      EpochTrace t;
      t.loss_main = lm[i].get<double>();
      t.loss_adv = la[i].get<double>();
      t.mae_x = mx[i].get<double>();
      t.mae_y = my[i].get<double>();
      m.trace.push_back(t);
    }
  }
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  return m;
} catch (const json::exception& e) {
  throw ParseError("manifest " + path + ": " + e.what());
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << text;
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace stib
