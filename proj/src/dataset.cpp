#include "stib/dataset.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stib/rng.hpp"

namespace stib {

void spiral_targets(const SpiralConfig& cfg, double x0, double x1, double e,
                    double e1, double e2, double& y0, double& y1) {
  const double angle = 2.0 * x0 + x1 + cfg.input_noise_scale * e;
  const double radius = 0.05 * (angle + cfg.b * angle);
  y0 = radius * std::cos(angle) + cfg.target_noise_scale * e1;
  y1 = radius * std::sin(angle) + cfg.target_noise_scale * e2;
}

Dataset gen_spiral(const SpiralConfig& cfg) {
  if (cfg.n < 1) throw DomainError("gen_spiral: n must be >= 1");
  if (cfg.input_noise_scale < 0.0 || cfg.target_noise_scale < 0.0)
    throw DomainError("gen_spiral: noise scales must be >= 0");

  Rng rng(cfg.seed);
  Dataset ds;
  ds.x = Matrix(cfg.n, 2);
  ds.y = Matrix(cfg.n, 2);
  ds.column_names = {"x0", "x1", "y0", "y1"};

  const double on = cfg.noise_enabled ? 1.0 : 0.0;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    const double x0 = rng.uniform() * 8.0 - 4.0;
    const double x1 = rng.uniform() * 8.0 - 4.0;
    const double e = rng.normal() * on;
    const double e1 = rng.normal() * on;
    const double e2 = rng.normal() * on;
    ds.x(i, 0) = x0;
    ds.x(i, 1) = x1;
    spiral_targets(cfg, x0, x1, e, e1, e2, ds.y(i, 0), ds.y(i, 1));
  }
  return ds;
}

static void format_value(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

void save_csv(const Dataset& ds, const std::string& path) {
  if (ds.x.rows != ds.y.rows)
    throw ShapeError("save_csv: x and y row counts differ");
  if (ds.column_names.size() != ds.x.cols + ds.y.cols)
    throw ShapeError("save_csv: column name count does not match data");

  std::string out;
  for (std::size_t j = 0; j < ds.column_names.size(); ++j) {
    if (j) out += ',';
    out += ds.column_names[j];
  }
  out += '\n';
  for (std::size_t i = 0; i < ds.x.rows; ++i) {
    for (std::size_t j = 0; j < ds.x.cols; ++j) {
      if (j) out += ',';
      format_value(out, ds.x(i, j));
    }
    for (std::size_t j = 0; j < ds.y.cols; ++j) {
      out += ',';
      format_value(out, ds.y(i, j));
    }
    out += '\n';
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_csv: cannot open " + path + " for writing");
  f << out;
  if (!f) throw IoError("save_csv: write failed for " + path);
}

static std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

Dataset load_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_csv: cannot open " + path);

  std::string header;
  if (!std::getline(f, header) || header.empty())
    throw ParseError("load_csv: missing header row in " + path);

  const std::vector<std::string> names = split_line(header);
  // Schema: x0..x{dx-1} followed by y0..y{dy-1}, both nonempty.
  std::size_t dx = 0;
  while (dx < names.size() && names[dx] == "x" + std::to_string(dx)) ++dx;
  std::size_t dy = 0;
  while (dx + dy < names.size() && names[dx + dy] == "y" + std::to_string(dy)) ++dy;
  if (dx == 0 || dy == 0 || dx + dy != names.size())
    throw ParseError("load_csv: header must name columns x0..,y0.. in order; got \"" +
                     header + "\"");

  std::vector<double> xs, ys;
  std::string line;
  std::size_t data_row = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ++data_row;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != names.size())
      throw ParseError("load_csv: row " + std::to_string(data_row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(names.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(cells[j].c_str(), &end);
      if (end == cells[j].c_str() || *end != '\0' || errno == ERANGE ||
          !std::isfinite(v))
        throw ParseError("load_csv: row " + std::to_string(data_row) +
                         " column " + std::to_string(j) + " (\"" + cells[j] +
                         "\") is not a finite real");
      (j < dx ? xs : ys).push_back(v);
    }
  }
  if (data_row == 0) throw ParseError("load_csv: no data rows in " + path);

  Dataset ds;
  ds.x = Matrix(data_row, dx);
  ds.x.data = std::move(xs);
  ds.y = Matrix(data_row, dy);
  ds.y.data = std::move(ys);
  ds.column_names = names;
  return ds;
}

std::uint64_t dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix_bytes = [&h](const void* p, std::size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  const std::uint64_t dims[4] = {ds.x.rows, ds.x.cols, ds.y.rows, ds.y.cols};
  mix_bytes(dims, sizeof(dims));
  mix_bytes(ds.x.data.data(), ds.x.data.size() * sizeof(double));
  mix_bytes(ds.y.data.data(), ds.y.data.size() * sizeof(double));
  return h;
}

Standardizer Standardizer::fit(const Matrix& m) {
  if (m.rows < 2) throw ShapeError("Standardizer::fit: need at least 2 rows");
  Standardizer s;
  s.means = Matrix(1, m.cols);
  s.scales = Matrix(1, m.cols);
  for (std::size_t j = 0; j < m.cols; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) mu += m(i, j);
    mu /= static_cast<double>(m.rows);
    double var = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
      const double d = m(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(m.rows - 1);
    s.means(0, j) = mu;
    s.scales(0, j) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Matrix Standardizer::transform(const Matrix& m) const {
  if (m.cols != means.cols)
    throw ShapeError("Standardizer::transform: column count mismatch");
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      out(i, j) = (m(i, j) - means(0, j)) / scales(0, j);
  return out;
}

Matrix Standardizer::inverse(const Matrix& m) const {
  if (m.cols != means.cols)
    throw ShapeError("Standardizer::inverse: column count mismatch");
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j)
      out(i, j) = m(i, j) * scales(0, j) + means(0, j);
  return out;
}

}  // namespace stib
