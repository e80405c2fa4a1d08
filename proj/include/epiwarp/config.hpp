#pragma once

// Structured text configuration: "[section]" headers and "key = value"
// lines, with every default embedded so a dumped config reproduces a run.

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "epiwarp/tensor.hpp"

namespace epiwarp {

struct RunConfig {
  // [run]
  std::string mode = "multiview";  // or "lf"
  std::uint64_t seed = 1;

  // [model]
  std::size_t sources = 2;        // N
  std::size_t neighborhood = 8;   // M
  std::size_t psv_layers = 4;     // D
  std::size_t channels = 3;
  std::size_t c_ctt = 16;
  std::size_t fc_width = 32;
  std::size_t fc_blocks = 3;
  std::size_t fw_width = 64;
  std::size_t fb_width = 64;
  std::size_t fv_width = 64;
  std::size_t c_g = 32;
  std::size_t unet_width = 16;
  std::size_t fr_width = 64;
  std::size_t fr_blocks = 4;

  // [train]
  std::size_t patch = 64;
  std::size_t batch = 2;
  std::size_t steps = 2000;
  double lr = 1e-3;
  std::size_t lr_drop_step = 8000;
  double lr_dropped = 1e-5;
  double lambda = 0.01;
  std::size_t checkpoint_every = 500;

  // [ablation]
  bool content_embedding = true;
  bool global_embedding = true;
  bool psv_fusion = true;
  bool feature_warp = true;
  bool weight_smoothness = true;

  void check() const {
    if (mode != "multiview" && mode != "lf")
      throw ConfigError("config: mode must be multiview or lf");
    if (sources < 1 || neighborhood < 2 || psv_layers < 2)
      throw ConfigError("config: need sources >= 1, M >= 2, D >= 2");
    if (lambda < 0) throw ConfigError("config: lambda must be >= 0");
    if (patch == 0 || batch == 0) throw ConfigError("config: zero patch/batch");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": " + v);
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unterminated section header");
      section = line.substr(1, line.size() - 2);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    const std::string qual = section + "." + key;

    auto u = [&](std::size_t& field) { field = std::stoul(val); };
    auto d = [&](double& field) { field = std::stod(val); };
    auto b = [&](bool& field) { field = detail::parse_bool(val, qual); };

    if (qual == "run.mode") cfg.mode = val;
    else if (qual == "run.seed") cfg.seed = std::stoull(val);
    else if (qual == "model.sources") u(cfg.sources);
    else if (qual == "model.neighborhood") u(cfg.neighborhood);
    else if (qual == "model.psv_layers") u(cfg.psv_layers);
    else if (qual == "model.channels") u(cfg.channels);
    else if (qual == "model.c_ctt") u(cfg.c_ctt);
    else if (qual == "model.fc_width") u(cfg.fc_width);
    else if (qual == "model.fc_blocks") u(cfg.fc_blocks);
    else if (qual == "model.fw_width") u(cfg.fw_width);
    else if (qual == "model.fb_width") u(cfg.fb_width);
    else if (qual == "model.fv_width") u(cfg.fv_width);
    else if (qual == "model.c_g") u(cfg.c_g);
    else if (qual == "model.unet_width") u(cfg.unet_width);
    else if (qual == "model.fr_width") u(cfg.fr_width);
    else if (qual == "model.fr_blocks") u(cfg.fr_blocks);
    else if (qual == "train.patch") u(cfg.patch);
    else if (qual == "train.batch") u(cfg.batch);
    else if (qual == "train.steps") u(cfg.steps);
    else if (qual == "train.lr") d(cfg.lr);
    else if (qual == "train.lr_drop_step") u(cfg.lr_drop_step);
    else if (qual == "train.lr_dropped") d(cfg.lr_dropped);
    else if (qual == "train.lambda") d(cfg.lambda);
    else if (qual == "train.checkpoint_every") u(cfg.checkpoint_every);
    else if (qual == "ablation.content_embedding") b(cfg.content_embedding);
    else if (qual == "ablation.global_embedding") b(cfg.global_embedding);
    else if (qual == "ablation.psv_fusion") b(cfg.psv_fusion);
    else if (qual == "ablation.feature_warp") b(cfg.feature_warp);
    else if (qual == "ablation.weight_smoothness") b(cfg.weight_smoothness);
    else
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": unknown key " + qual);
  }
  cfg.check();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("config: cannot open " + path);
  return parse_config(f);
}

inline void dump_config(std::ostream& os, const RunConfig& c) {
  os << "[run]\nmode = " << c.mode << "\nseed = " << c.seed << "\n\n[model]\n"
     << "sources = " << c.sources << "\nneighborhood = " << c.neighborhood
     << "\npsv_layers = " << c.psv_layers << "\nchannels = " << c.channels
     << "\nc_ctt = " << c.c_ctt << "\nfc_width = " << c.fc_width
     << "\nfc_blocks = " << c.fc_blocks << "\nfw_width = " << c.fw_width
     << "\nfb_width = " << c.fb_width << "\nfv_width = " << c.fv_width
     << "\nc_g = " << c.c_g << "\nunet_width = " << c.unet_width
     << "\nfr_width = " << c.fr_width << "\nfr_blocks = " << c.fr_blocks
     << "\n\n[train]\npatch = " << c.patch << "\nbatch = " << c.batch
     << "\nsteps = " << c.steps << "\nlr = " << c.lr
     << "\nlr_drop_step = " << c.lr_drop_step
     << "\nlr_dropped = " << c.lr_dropped << "\nlambda = " << c.lambda
     << "\ncheckpoint_every = " << c.checkpoint_every << "\n\n[ablation]\n"
     << std::boolalpha << "content_embedding = " << c.content_embedding
     << "\nglobal_embedding = " << c.global_embedding
     << "\npsv_fusion = " << c.psv_fusion
     << "\nfeature_warp = " << c.feature_warp
     << "\nweight_smoothness = " << c.weight_smoothness << "\n";
}

}  // namespace epiwarp
