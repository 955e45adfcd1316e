#include "fineray/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fineray/rng.hpp"

namespace fineray {

namespace fs = std::filesystem;

namespace {

bool mostly_background(const Image& img, const std::array<double, 3>& bg) {
  size_t fg = 0, total = static_cast<size_t>(img.height) * img.width;
  for (size_t p = 0; p < total; ++p) {
    const double* px = img.rgb.data() + p * 3;
    double d = std::abs(px[0] - bg[0]) + std::abs(px[1] - bg[1]) + std::abs(px[2] - bg[2]);
    if (d > 0.01) ++fg;
  }
  return fg < total / 100 + 1;
}

View render_view(const AnalyticScene& scene, const SceneConfig& cfg, const Camera& cam,
                 int n_quad) {
  View v;
  v.camera = cam;
  v.near = cfg.near;
  v.far = cfg.far;
  v.image = Image(cfg.height, cfg.width);
  for (int y = 0; y < cfg.height; ++y)
    for (int x = 0; x < cfg.width; ++x) {
      Ray ray = pixel_ray(cam, x, y, cfg.near, cfg.far);
      std::array<double, 3> c = oracle_render(scene, cfg, ray, n_quad);
      double* px = v.image.pixel(y, x);
      for (int ch = 0; ch < 3; ++ch) px[ch] = c[ch];
    }
  return v;
}

}  // namespace

Dataset generate_dataset(const AnalyticScene& scene, const SceneConfig& cfg, int n_train,
                         int n_val, int n_test, uint64_t seed, int oracle_quadrature) {
  if (n_train < 1 || n_val < 1 || n_test < 1)
    throw Error("generate_dataset: all split sizes must be >= 1");
  cfg.validate();
  scene.validate();

  Dataset ds;
  ds.scene_config = cfg;
  double focal = 1.1 * std::max(cfg.width, cfg.height);
  double orbit_radius = 0.5 * (cfg.near + cfg.far);

  auto make_views = [&](int count, Rng rng) {
    std::vector<View> views;
    for (int i = 0; i < count; ++i) {
      for (int attempt = 0;; ++attempt) {
        double az = rng.uniform(0, 2 * M_PI);
        double el = rng.uniform(-0.45 * M_PI, 0.45 * M_PI);
        // Vary the viewing distance so depth profiles differ across views;
        // a fixed-radius orbit would put every surface in the same narrow
        // band of normalized depth.
        double r = orbit_radius * rng.uniform(0.8, 1.25);
        Eigen::Vector3d eye(r * std::cos(el) * std::cos(az), r * std::sin(el),
                            r * std::cos(el) * std::sin(az));
        Camera cam = Camera::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 1, 0),
                                     focal, cfg.width, cfg.height);
        View v = render_view(scene, cfg, cam, oracle_quadrature);
        if (!mostly_background(v.image, cfg.background)) {
          views.push_back(std::move(v));
          break;
        }
        if (attempt >= 32)
          throw Error("generate_dataset: could not find a view with >= 1% foreground");
      }
    }
    return views;
  };

  ds.train = make_views(n_train, Rng::derive(seed, "views.train"));
  ds.val = make_views(n_val, Rng::derive(seed, "views.val"));
  ds.test = make_views(n_test, Rng::derive(seed, "views.test"));
  return ds;
}

void save_views(const std::string& dir, const std::vector<View>& views) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "fineray-manifest 1\n";
  manifest << std::setprecision(17);
  for (size_t i = 0; i < views.size(); ++i) {
    const View& v = views[i];
    std::ostringstream name;
    name << "view_" << std::setw(4) << std::setfill('0') << i << ".ppm";
    write_ppm((fs::path(dir) / name.str()).string(), v.image);
    manifest << name.str() << " " << v.camera.focal << " " << v.camera.cx << " " << v.camera.cy;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) manifest << " " << v.camera.pose(r, c);
    manifest << " " << v.near << " " << v.far << "\n";
  }
  std::ofstream f(fs::path(dir) / "manifest.txt");
  if (!f) throw Error("save_views: cannot write manifest in " + dir);
  f << manifest.str();
}

std::vector<View> load_posed_images(const std::string& dir) {
  fs::path mpath = fs::path(dir) / "manifest.txt";
  std::ifstream f(mpath);
  if (!f) throw Error("load_posed_images: no manifest at " + mpath.string());
  std::string line;
  if (!std::getline(f, line) || line != "fineray-manifest 1")
    throw Error("load_posed_images: " + mpath.string() +
                " line 1: expected header 'fineray-manifest 1'");
  std::vector<View> views;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string fname;
    View v;
    is >> fname >> v.camera.focal >> v.camera.cx >> v.camera.cy;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) is >> v.camera.pose(r, c);
    is >> v.near >> v.far;
    if (!is)
      throw Error("load_posed_images: " + mpath.string() + " line " + std::to_string(lineno) +
                  ": malformed entry");
    fs::path ipath = fs::path(dir) / fname;
    if (!fs::exists(ipath))
      throw Error("load_posed_images: manifest references missing image " + fname);
    v.image = read_ppm(ipath.string());
    v.camera.width = v.image.width;
    v.camera.height = v.image.height;
    v.camera.validate();
    if (v.near >= v.far)
      throw Error("load_posed_images: " + mpath.string() + " line " + std::to_string(lineno) +
                  ": near must be < far");
    views.push_back(std::move(v));
  }
  return views;
}

}  // namespace fineray
