#include "cato/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "cato/checkpoint.hpp"
#include "cato/error.hpp"
#include "cato/rng.hpp"

namespace cato {

namespace fs = std::filesystem;
using nlohmann::json;

CoefficientField::CoefficientField(std::uint64_t seed, double contrast, std::size_t modes)
    : contrast_(contrast), modes_(modes) {
  if (!(contrast >= 1.0)) throw ConfigError("contrast must be >= 1, got " + std::to_string(contrast));
  if (modes == 0) throw ConfigError("coefficient field needs at least one mode");
  CounterRng rng(seed);
  double power = 0.0;
  for (std::size_t k = 1; k <= modes; ++k) {
    for (std::size_t l = 1; l <= modes; ++l) {
      const double a = rng.normal() / static_cast<double>(k * k + l * l);
      amp_.push_back(a);
      phase_x_.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
      phase_y_.push_back(rng.uniform(0.0, 2.0 * std::numbers::pi));
      power += a * a / 4.0;
    }
  }
  const double gain = power > 0.0 ? 2.5 / std::sqrt(power) : 0.0;
  for (double& a : amp_) a *= gain;
}

double CoefficientField::operator()(double x, double y) const {
  double s = 0.0;
  std::size_t m = 0;
  for (std::size_t k = 1; k <= modes_; ++k) {
    for (std::size_t l = 1; l <= modes_; ++l, ++m) {
      s += amp_[m] * std::cos(std::numbers::pi * k * x + phase_x_[m]) * std::cos(std::numbers::pi * l * y + phase_y_[m]);
    }
  }
  return 1.0 + (contrast_ - 1.0) / (1.0 + std::exp(-s));
}

std::vector<double> gen_coefficient(std::uint64_t seed, std::size_t rows, std::size_t cols, double contrast) {
  const CoefficientField field(seed, contrast);
  const Mesh mesh = Mesh::regular(rows, cols);
  std::vector<double> out(mesh.nodes());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = field(mesh.xy[2 * k], mesh.xy[2 * k + 1]);
  return out;
}

std::string to_string(SourceMode m) { return m == SourceMode::Manufactured ? "manufactured" : "random"; }

SourceMode source_mode_from_string(const std::string& s) {
  if (s == "manufactured") return SourceMode::Manufactured;
  if (s == "random") return SourceMode::Random;
  throw ConfigError("unknown source mode '" + s + "'");
}

double manufactured_source(double x, double y) {
  constexpr double pi = std::numbers::pi;
  return 2.0 * pi * pi * std::sin(pi * x) * std::sin(pi * y);
}

namespace {

struct RegularSpacing {
  double hx, hy;
};

RegularSpacing check_regular(const Mesh& mesh) {
  const GridShape g = mesh.grid;
  if (g.rows < 3 || g.cols < 3) throw ShapeError("solver needs at least 3 x 3 nodes");
  const double hx = (mesh.x(0, g.cols - 1) - mesh.x(0, 0)) / static_cast<double>(g.cols - 1);
  const double hy = (mesh.y(g.rows - 1, 0) - mesh.y(0, 0)) / static_cast<double>(g.rows - 1);
  if (!(hx > 0.0 && hy > 0.0)) throw ShapeError("solver mesh must have increasing x along columns and y along rows");
  const double tol = 1e-9 * std::max(hx, hy);
  for (std::size_t i = 0; i < g.rows; ++i) {
    for (std::size_t j = 0; j < g.cols; ++j) {
      if (std::abs(mesh.x(i, j) - mesh.x(0, 0) - hx * j) > tol || std::abs(mesh.y(i, j) - mesh.y(0, 0) - hy * i) > tol) {
        throw ShapeError("solver mesh is not an axis-aligned regular grid");
      }
    }
  }
  return {hx, hy};
}

}  // namespace

std::vector<double> solve_darcy(std::span<const double> a, const Mesh& mesh, std::span<const double> f, double tol,
                                SolveStats* stats, std::size_t max_iter) {
  const auto [hx, hy] = check_regular(mesh);
  const std::size_t H = mesh.grid.rows, W = mesh.grid.cols, n = mesh.nodes();
  if (a.size() != n || f.size() != n) throw ShapeError("coefficient and source must have one value per node");
  for (double v : a) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("coefficient must be positive and finite");
  }
  const double ix2 = 1.0 / (hx * hx), iy2 = 1.0 / (hy * hy);
  auto interior = [&](std::size_t i, std::size_t j) { return i > 0 && j > 0 && i + 1 < H && j + 1 < W; };

  // y = A x on interior nodes; boundary entries stay zero.
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 1; i + 1 < H; ++i) {
      for (std::size_t j = 1; j + 1 < W; ++j) {
        const std::size_t k = i * W + j;
        const double ae = 0.5 * (a[k] + a[k + 1]), aw = 0.5 * (a[k] + a[k - 1]);
        const double an = 0.5 * (a[k] + a[k + W]), as = 0.5 * (a[k] + a[k - W]);
        y[k] = ((ae + aw) * x[k] - ae * x[k + 1] - aw * x[k - 1]) * ix2 +
               ((an + as) * x[k] - an * x[k + W] - as * x[k - W]) * iy2;
      }
    }
  };
  auto dot = [&](const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += p[k] * q[k];
    return s;
  };

  std::vector<double> b(n, 0.0), u(n, 0.0), r(n, 0.0), p(n, 0.0), Ap(n, 0.0);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      if (interior(i, j)) b[i * W + j] = f[i * W + j];
    }
  }
  const double bnorm = std::sqrt(dot(b, b));
  SolveStats st;
  if (bnorm == 0.0) {
    if (stats) *stats = st;
    return u;
  }
  if (max_iter == 0) max_iter = 10 * n + 100;
  r = b;
  p = r;
  double rr = dot(r, r);
  while (std::sqrt(rr) / bnorm >= tol) {
    if (st.iterations >= max_iter) {
      throw NumericError("conjugate gradients did not converge in " + std::to_string(max_iter) +
                         " iterations (relative residual " + std::to_string(std::sqrt(rr) / bnorm) + ")");
    }
    apply(p, Ap);
    const double alpha = rr / dot(p, Ap);
    for (std::size_t k = 0; k < n; ++k) {
      u[k] += alpha * p[k];
      r[k] -= alpha * Ap[k];
    }
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
    ++st.iterations;
  }
  apply(u, Ap);
  double res = 0.0;
  for (std::size_t k = 0; k < n; ++k) res += (b[k] - Ap[k]) * (b[k] - Ap[k]);
  st.relative_residual = std::sqrt(res) / bnorm;
  if (stats) *stats = st;
  return u;
}

double min_cell_jacobian(const Mesh& mesh) {
  const GridShape g = mesh.grid;
  if (g.rows < 2 || g.cols < 2) throw ShapeError("mesh needs at least 2 x 2 nodes");
  const double ref = 1.0 / static_cast<double>((g.rows - 1) * (g.cols - 1));
  double worst = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < g.rows; ++i) {
    for (std::size_t j = 0; j + 1 < g.cols; ++j) {
      // Corners in counter-clockwise order; each corner's cross product of its outgoing edges.
      const std::size_t ci[4] = {i, i, i + 1, i + 1};
      const std::size_t cj[4] = {j, j + 1, j + 1, j};
      for (int c = 0; c < 4; ++c) {
        const int nx = (c + 1) % 4, pv = (c + 3) % 4;
        const double ex = mesh.x(ci[nx], cj[nx]) - mesh.x(ci[c], cj[c]);
        const double ey = mesh.y(ci[nx], cj[nx]) - mesh.y(ci[c], cj[c]);
        const double fx = mesh.x(ci[pv], cj[pv]) - mesh.x(ci[c], cj[c]);
        const double fy = mesh.y(ci[pv], cj[pv]) - mesh.y(ci[c], cj[c]);
        worst = std::min(worst, (ex * fy - ey * fx) / ref);
      }
    }
  }
  return worst;
}

Mesh distort_mesh(std::size_t rows, std::size_t cols, double amplitude) {
  if (!(amplitude >= 0.0)) throw ConfigError("distortion amplitude must be non-negative");
  Mesh mesh = Mesh::regular(rows, cols);
  if (amplitude == 0.0) return mesh;
  constexpr double pi = std::numbers::pi;
  for (std::size_t k = 0; k < mesh.nodes(); ++k) {
    const double X = mesh.xy[2 * k], Y = mesh.xy[2 * k + 1];
    mesh.xy[2 * k] = X + amplitude * std::sin(pi * X) * std::sin(2.0 * pi * Y);
    mesh.xy[2 * k + 1] = Y + amplitude * std::sin(2.0 * pi * X) * std::sin(pi * Y);
  }
  const double jmin = min_cell_jacobian(mesh);
  if (!(jmin > 0.0)) {
    throw ConfigError("distortion amplitude " + std::to_string(amplitude) + " folds the mesh (min Jacobian " +
                      std::to_string(jmin) + ")");
  }
  return mesh;
}

double bilinear(std::span<const double> field, GridShape grid, double x, double y) {
  if (field.size() != grid.nodes() || grid.rows < 2 || grid.cols < 2) throw ShapeError("bilinear: bad field");
  auto locate = [](double t, std::size_t n, std::size_t& k0) {
    const double s = std::clamp(t, 0.0, 1.0) * static_cast<double>(n - 1);
    k0 = std::min(static_cast<std::size_t>(s), n - 2);
    return s - static_cast<double>(k0);
  };
  std::size_t i0 = 0, j0 = 0;
  const double tx = locate(x, grid.cols, j0);
  const double ty = locate(y, grid.rows, i0);
  const std::size_t W = grid.cols;
  const double f00 = field[i0 * W + j0], f01 = field[i0 * W + j0 + 1];
  const double f10 = field[(i0 + 1) * W + j0], f11 = field[(i0 + 1) * W + j0 + 1];
  return (1 - ty) * ((1 - tx) * f00 + tx * f01) + ty * ((1 - tx) * f10 + tx * f11);
}

void DatasetConfig::validate() const {
  if (rows < 3 || cols < 3) throw ConfigError("dataset grids need at least 3 x 3 nodes");
  if (n_train + n_test == 0) throw ConfigError("dataset must contain at least one sample");
  if (!(contrast >= 1.0)) throw ConfigError("contrast must be >= 1");
  if (modes == 0) throw ConfigError("coefficient modes must be positive");
  if (!(distortion >= 0.0)) throw ConfigError("distortion must be non-negative");
  if (cloud_points == 1 || cloud_points > rows * cols) {
    throw ConfigError("cloud_points must be 0 or between 2 and the node count");
  }
}

Sample make_sample(const DatasetConfig& cfg, std::uint64_t sample_seed) {
  const CoefficientField coeff(sample_seed, cfg.contrast, cfg.modes);
  const std::optional<CoefficientField> random_src =
      cfg.source == SourceMode::Random ? std::optional(CoefficientField(splitmix64(sample_seed ^ 0x5eedULL), 3.0, cfg.modes))
                                       : std::nullopt;
  auto source = [&](double x, double y) {
    return random_src ? 5.0 * (*random_src)(x, y) : manufactured_source(x, y);
  };

  const Mesh reg = Mesh::regular(cfg.rows, cfg.cols);
  const std::size_t n = reg.nodes();
  std::vector<double> a(n), f(n);
  for (std::size_t k = 0; k < n; ++k) {
    a[k] = coeff(reg.xy[2 * k], reg.xy[2 * k + 1]);
    f[k] = source(reg.xy[2 * k], reg.xy[2 * k + 1]);
  }
  const std::vector<double> u_reg = solve_darcy(a, reg, f);

  Sample s;
  s.seed = sample_seed;
  s.mesh = distort_mesh(cfg.rows, cfg.cols, cfg.distortion);
  const std::size_t df = cfg.feature_dim();
  s.feats = Tensor({n, df});
  s.u = Tensor({n});
  for (std::size_t k = 0; k < n; ++k) {
    const double x = s.mesh.xy[2 * k], y = s.mesh.xy[2 * k + 1];
    s.feats.at(k, 0) = coeff(x, y);
    if (df > 1) s.feats.at(k, 1) = source(x, y);
    s.u[k] = cfg.distortion == 0.0 ? u_reg[k] : bilinear(u_reg, reg.grid, x, y);
  }
  if (cfg.cloud_points > 0) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    CounterRng rng(splitmix64(sample_seed ^ 0xc10dULL));
    rng.shuffle(idx);
    idx.resize(cfg.cloud_points);
    PointCloud pc{Tensor({cfg.cloud_points, 2}), Tensor({cfg.cloud_points, df})};
    s.cloud_u = Tensor({cfg.cloud_points});
    for (std::size_t p = 0; p < cfg.cloud_points; ++p) {
      pc.coords.at(p, 0) = s.mesh.xy[2 * idx[p]];
      pc.coords.at(p, 1) = s.mesh.xy[2 * idx[p] + 1];
      for (std::size_t c = 0; c < df; ++c) pc.feats.at(p, c) = s.feats.at(idx[p], c);
      s.cloud_u[p] = s.u[idx[p]];
    }
    s.cloud = std::move(pc);
  }
  return s;
}

namespace {

std::uint64_t sample_seed(std::uint64_t seed, int split, std::size_t index) {
  return splitmix64(splitmix64(seed) ^ (static_cast<std::uint64_t>(split) << 40) ^ index);
}

json config_json(const DatasetConfig& c) {
  return {{"rows", c.rows},         {"cols", c.cols},
          {"n_train", c.n_train},   {"n_test", c.n_test},
          {"contrast", c.contrast}, {"modes", c.modes},
          {"source", to_string(c.source)}, {"distortion", c.distortion},
          {"cloud_points", c.cloud_points}, {"seed", c.seed},
          {"feature_dim", c.feature_dim()}};
}

DatasetConfig config_from_json(const json& j) {
  DatasetConfig c;
  c.rows = j.at("rows").get<std::size_t>();
  c.cols = j.at("cols").get<std::size_t>();
  c.n_train = j.at("n_train").get<std::size_t>();
  c.n_test = j.at("n_test").get<std::size_t>();
  c.contrast = j.at("contrast").get<double>();
  c.modes = j.at("modes").get<std::size_t>();
  c.source = source_mode_from_string(j.at("source").get<std::string>());
  c.distortion = j.at("distortion").get<double>();
  c.cloud_points = j.at("cloud_points").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

fs::path write_dataset(const DatasetConfig& cfg, const fs::path& dir) {
  cfg.validate();
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_directory(dir, ec)) {
    throw IoError("output path '" + dir.string() + "' exists and is not a directory");
  }
  // Generate everything before touching the disk so failures leave nothing behind.
  std::vector<std::pair<std::string, std::vector<Sample>>> splits = {{"train", {}}, {"test", {}}};
  for (int s = 0; s < 2; ++s) {
    const std::size_t count = s == 0 ? cfg.n_train : cfg.n_test;
    for (std::size_t i = 0; i < count; ++i) splits[s].second.push_back(make_sample(cfg, sample_seed(cfg.seed, s, i)));
  }
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  json manifest = {{"format", "cato-dataset"}, {"version", 1}, {"config", config_json(cfg)}};
  for (const auto& [name, samples] : splits) {
    fs::create_directories(dir / name, ec);
    if (ec) throw IoError("cannot create '" + (dir / name).string() + "': " + ec.message());
    json list = json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Sample& s = samples[i];
      char stem[32];
      std::snprintf(stem, sizeof stem, "%05zu", i);
      json files;
      auto put = [&](const std::string& field, const Tensor& t) {
        const std::string rel = name + "/" + stem + "." + field + ".cato";
        write_tensor_file(dir / rel, {{field, t}});
        files[field] = rel;
      };
      put("coords", s.mesh.coords());
      put("feats", s.feats);
      put("u", s.u);
      if (s.cloud) {
        const std::string rel = name + "/" + stem + ".cloud.catp";
        write_point_cloud(dir / rel, *s.cloud);
        files["cloud"] = rel;
        put("cloud_u", s.cloud_u);
      }
      list.push_back({{"index", i}, {"seed", s.seed}, {"files", files}});
    }
    manifest[name] = std::move(list);
  }
  const fs::path final_path = dir / "manifest.json";
  const fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + tmp.string() + "'");
    os << manifest.dump(1) << '\n';
    if (!os) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, final_path);
  return final_path;
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream is(mpath);
  if (!is) throw IoError("no dataset manifest at '" + mpath.string() + "'");
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw IoError("cannot parse '" + mpath.string() + "': " + e.what());
  }
  Dataset ds;
  try {
    ds.config = config_from_json(manifest.at("config"));
  } catch (const json::exception& e) {
    throw IoError("bad dataset config in '" + mpath.string() + "': " + e.what());
  }
  const GridShape grid{ds.config.rows, ds.config.cols};
  const std::size_t df = ds.config.feature_dim();
  auto read_one = [&](const std::string& rel) {
    auto recs = read_tensor_file(dir / rel);
    if (recs.size() != 1) throw IoError("'" + rel + "' should hold one tensor");
    return std::move(recs.front().tensor);
  };
  for (const char* split : {"train", "test"}) {
    auto& out = std::string(split) == "train" ? ds.train : ds.test;
    for (const auto& entry : manifest.at(split)) {
      const json& files = entry.at("files");
      Sample s;
      s.seed = entry.at("seed").get<std::uint64_t>();
      const Tensor coords = read_one(files.at("coords").get<std::string>());
      if (coords.shape() != Shape{grid.nodes(), 2}) throw IoError("coordinates do not match the manifest grid");
      s.mesh.grid = grid;
      s.mesh.xy.assign(coords.data().begin(), coords.data().end());
      s.feats = read_one(files.at("feats").get<std::string>());
      s.u = read_one(files.at("u").get<std::string>());
      if (s.feats.shape() != Shape{grid.nodes(), df} || s.u.numel() != grid.nodes()) {
        throw IoError("sample fields do not match the manifest shapes");
      }
      if (files.contains("cloud")) {
        s.cloud = read_point_cloud(dir / files.at("cloud").get<std::string>());
        s.cloud_u = read_one(files.at("cloud_u").get<std::string>());
      }
      out.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace cato
