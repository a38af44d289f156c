#include "codesign/terrain.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

namespace codesign {

static_assert(std::endian::native == std::endian::little, "terrain files assume a little-endian host");

Eigen::MatrixXd gaussian_kernel(const Lattice& lattice, double length_scale) {
  if (!(length_scale > 0.0)) throw ConfigError("terrain length scale must be positive");
  const long n = lattice.size();
  Eigen::MatrixXd k(n, n);
  const double inv = 1.0 / (2.0 * length_scale * length_scale);
  for (long a = 0; a < n; ++a) {
    const double xa = lattice.x(a / lattice.nz), za = lattice.z(a % lattice.nz);
    k(a, a) = 1.0;
    for (long b = 0; b < a; ++b) {
      const double ddx = xa - lattice.x(b / lattice.nz);
      const double ddz = za - lattice.z(b % lattice.nz);
      const double v = std::exp(-(ddx * ddx + ddz * ddz) * inv);
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

GpSampler::GpSampler(const Lattice& lattice, double length_scale) {
  const Eigen::MatrixXd k = gaussian_kernel(lattice, length_scale);
  for (double jitter = 1e-10; jitter <= 1e-6 * (1.0 + 1e-9); jitter *= 10.0) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      jitter_ = jitter;
      return;
    }
  }
  throw ConfigError("Cholesky factorization of the terrain kernel failed even with jitter 1e-6");
}

Eigen::VectorXd GpSampler::sample(std::uint64_t seed, double mean, double height_scale) const {
  if (height_scale < 0.0) throw ConfigError("terrain height scale must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(factor_.rows());
  for (long i = 0; i < z.size(); ++i) z[i] = normal(rng);
  Eigen::VectorXd h = Eigen::VectorXd::Constant(z.size(), mean);
  if (height_scale > 0.0) h += height_scale * (factor_.triangularView<Eigen::Lower>() * z).eval();
  return h;
}

Eigen::VectorXd gp_sample(const Lattice& lattice, double length_scale, double height_scale, double mean,
                          std::uint64_t seed) {
  return GpSampler(lattice, length_scale).sample(seed, mean, height_scale);
}

std::vector<double> flatten_inlet(const Eigen::VectorXd& raw, const Lattice& lattice, double xbar, double hbar) {
  const double lx = lattice.length_x();
  if (!(xbar > 0.0 && xbar < lx)) throw ConfigError("inlet extent must lie strictly inside the domain");
  if (raw.size() != lattice.size()) throw ConfigError("raw terrain does not match its lattice");

  // h(xbar, z), linearly interpolated when xbar falls between lattice points.
  const double fb = xbar / lattice.dx;
  long ib = static_cast<long>(std::floor(fb + 1e-9));
  double tb = fb - static_cast<double>(ib);
  if (std::abs(tb) < 1e-9) tb = 0.0;
  ib = std::min(ib, lattice.nx - 2);

  std::vector<double> out(raw.size(), hbar);
  for (long iz = 0; iz < lattice.nz; ++iz) {
    const double h0 = raw[lattice.index(ib, iz)];
    const double hxb = tb == 0.0 ? h0 : (1.0 - tb) * h0 + tb * raw[lattice.index(ib + 1, iz)];
    const double drop = raw[lattice.index(lattice.nx - 1, iz)] - hxb;
    for (long ix = 0; ix < lattice.nx; ++ix) {
      const double x = ix == lattice.nx - 1 ? lx : lattice.x(ix);
      if (x <= xbar || (tb == 0.0 && ix <= ib)) continue;
      const double s = ix == lattice.nx - 1 ? 1.0 : (x - xbar) / (lx - xbar);
      out[lattice.index(ix, iz)] = hbar + ((raw[lattice.index(ix, iz)] - hxb) - drop * s);
    }
  }
  return out;
}

TerrainSample make_terrain(const GpSampler& sampler, const Lattice& lattice, const TerrainHyper& hyper,
                           int dimension, std::uint64_t seed) {
  TerrainSample t;
  t.dimension = dimension;
  t.lattice = lattice;
  t.hyper = hyper;
  t.seed = seed;
  const Eigen::VectorXd raw = sampler.sample(seed, hyper.inlet_height, hyper.height_scale);
  t.height = flatten_inlet(raw, lattice, hyper.inlet_extent, hyper.inlet_height);
  return t;
}

int surface_index(double height, double dy) {
  if (!(dy > 0.0)) throw ConfigError("grid spacing must be positive");
  return static_cast<int>(std::floor(height / dy + 1e-9));
}

SurfaceGrid rasterize_surface(const TerrainSample& terrain, double dy, int max_index) {
  SurfaceGrid s;
  s.lattice = terrain.lattice;
  s.index.resize(terrain.height.size());
  s.height.resize(terrain.height.size());
  for (std::size_t i = 0; i < terrain.height.size(); ++i) {
    const int j = std::clamp(surface_index(terrain.height[i], dy), 0, max_index);
    s.index[i] = j;
    s.height[i] = j * dy;
  }
  return s;
}

template <int Dim>
Ground<Dim> rasterize_boundary(const TerrainSample& terrain, const GridLayout<Dim>& layout, int wall_band) {
  const Lattice expect = Lattice::from_grid(layout);
  if (terrain.lattice.nx != expect.nx || terrain.lattice.nz != expect.nz)
    throw ConfigError("terrain lattice does not match the simulation grid");

  Ground<Dim> g;
  g.inlet_height = terrain.hyper.inlet_height;
  g.surface = rasterize_surface(terrain, layout.dx, layout.cells[kVertical]);
  g.boundary = BoundaryField<Dim>(layout);
  const Lattice& lat = g.surface.lattice;

  auto slope = [&](long i, long n, auto&& h) {
    if (n < 2) return 0.0;
    const long lo = std::max(i - 1, 0L), hi = std::min(i + 1, n - 1);
    return (h(hi) - h(lo)) / (static_cast<double>(hi - lo) * layout.dx);
  };

  for (long ix = 0; ix < lat.nx; ++ix) {
    for (long iz = 0; iz < lat.nz; ++iz) {
      Vec<Dim> n = Vec<Dim>::Unit(kVertical);
      n[0] = -slope(ix, lat.nx, [&](long k) { return g.surface.at(k, iz); });
      if constexpr (Dim == 3) n[2] = -slope(iz, lat.nz, [&](long k) { return g.surface.at(ix, k); });
      n.normalize();
      const int top = g.surface.index_at(ix, iz);
      for (int j = 0; j <= top; ++j) {
        IVec<Dim> node;
        node[0] = static_cast<int>(ix);
        node[kVertical] = j;
        if constexpr (Dim == 3) node[2] = static_cast<int>(iz);
        const long id = layout.index(node);
        g.boundary.kind[id] = NodeBoundary::kGround;
        g.boundary.normal[id] = n;
      }
    }
  }
  g.boundary.add_walls(layout, wall_band);
  return g;
}

template Ground<2> rasterize_boundary(const TerrainSample&, const GridLayout<2>&, int);
template Ground<3> rasterize_boundary(const TerrainSample&, const GridLayout<3>&, int);

Dataset dataset_build(long n_train, long n_test, const TerrainHyper& hyper, const Lattice& lattice, int dimension,
                      std::uint64_t master_seed) {
  if (n_train < 1 || n_test < 1) throw ConfigError("dataset needs at least one train and one test terrain");
  Dataset d;
  d.dimension = dimension;
  d.lattice = lattice;
  d.hyper = hyper;
  d.master_seed = master_seed;
  const GpSampler sampler(lattice, hyper.length_scale);
  for (long i = 0; i < n_train + n_test; ++i) {
    d.terrains.push_back(make_terrain(sampler, lattice, hyper, dimension, derive_seed(master_seed, i)));
    (i < n_train ? d.train : d.test).push_back(i);
  }
  return d;
}

namespace {

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated terrain file: " + path.string());
  return v;
}

}  // namespace

void write_terrain(const std::filesystem::path& path, const TerrainSample& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dimension));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.lattice.nx));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.lattice.nz));
  put<double>(out, t.lattice.dx);
  put<double>(out, t.lattice.dz);
  put<double>(out, t.hyper.inlet_height);
  put<double>(out, t.hyper.inlet_extent);
  out.write(reinterpret_cast<const char*>(t.height.data()), static_cast<std::streamsize>(t.height.size() * 8));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

TerrainSample read_terrain(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  TerrainSample t;
  t.dimension = static_cast<int>(get<std::uint32_t>(in, path));
  t.lattice.nx = get<std::uint32_t>(in, path);
  t.lattice.nz = get<std::uint32_t>(in, path);
  t.lattice.dx = get<double>(in, path);
  t.lattice.dz = get<double>(in, path);
  t.hyper.inlet_height = get<double>(in, path);
  t.hyper.inlet_extent = get<double>(in, path);
  t.height.resize(t.lattice.size());
  in.read(reinterpret_cast<char*>(t.height.data()), static_cast<std::streamsize>(t.height.size() * 8));
  if (!in) throw std::runtime_error("truncated terrain file: " + path.string());
  return t;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["dimension"] = d.dimension;
  m["lattice"] = {{"nx", d.lattice.nx}, {"nz", d.lattice.nz}, {"dx", d.lattice.dx}, {"dz", d.lattice.dz}};
  m["hyper"] = {{"varrho", d.hyper.length_scale},
                {"varsigma", d.hyper.height_scale},
                {"hbar", d.hyper.inlet_height},
                {"xbar", d.hyper.inlet_extent}};
  m["master_seed"] = d.master_seed;
  m["train"] = d.train;
  m["test"] = d.test;
  nlohmann::json files = nlohmann::json::array();
  for (std::size_t i = 0; i < d.terrains.size(); ++i) {
    const std::string name = "terrain_" + std::to_string(i) + ".bin";
    write_terrain(dir / name, d.terrains[i]);
    files.push_back({{"file", name}, {"seed", d.terrains[i].seed}});
  }
  m["terrains"] = files;
  const auto path = dir / "manifest.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << m.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed " + path.string() + ": " + e.what());
  }
  Dataset d;
  d.dimension = m.at("dimension").get<int>();
  d.lattice.nx = m.at("lattice").at("nx").get<long>();
  d.lattice.nz = m.at("lattice").at("nz").get<long>();
  d.lattice.dx = m.at("lattice").at("dx").get<double>();
  d.lattice.dz = m.at("lattice").at("dz").get<double>();
  d.hyper.length_scale = m.at("hyper").at("varrho").get<double>();
  d.hyper.height_scale = m.at("hyper").at("varsigma").get<double>();
  d.hyper.inlet_height = m.at("hyper").at("hbar").get<double>();
  d.hyper.inlet_extent = m.at("hyper").at("xbar").get<double>();
  d.master_seed = m.at("master_seed").get<std::uint64_t>();
  d.train = m.at("train").get<std::vector<long>>();
  d.test = m.at("test").get<std::vector<long>>();
  for (const auto& f : m.at("terrains")) {
    TerrainSample t = read_terrain(dir / f.at("file").get<std::string>());
    t.seed = f.at("seed").get<std::uint64_t>();
    t.hyper = d.hyper;
    d.terrains.push_back(std::move(t));
  }
  return d;
}

}  // namespace codesign
