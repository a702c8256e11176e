#include "procomp/train/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "procomp/imaging/metrics.hpp"
#include "procomp/nn/loss.hpp"
#include "procomp/sim/procgen.hpp"

namespace procomp::train {

namespace fs = std::filesystem;

void TrainConfig::check() const {
  if (iterations <= 0 || batch <= 0 || decay_at <= 0 || val_every <= 0)
    throw std::runtime_error("train config: counts must be positive");
  if (!(lr > 0) || !(lr_after_decay > 0) || weight_decay < 0)
    throw std::runtime_error("train config: rates must be positive");
  if (decay_at >= iterations)
    throw std::runtime_error("train config: decay must land before the end");
}

uint64_t TrainConfig::hash() const {
  // trajectory-defining fields only: a resumed run may extend iterations or
  // change the logging cadence, everything else must match the checkpoint
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d|%.9g|%.9g|%d|%.9g|%llu|%d", batch, lr,
                lr_after_decay, decay_at, weight_decay,
                (unsigned long long)seed, (int)refine_enabled);
  return fnv1a(buf, std::strlen(buf));
}

TrainConfig preset_config(const std::string& name) {
  TrainConfig c;
  if (name == "full") {
    c.iterations = 1500;
    c.batch = 48;
  } else if (name == "fast") {
    c.iterations = 1000;
    c.batch = 24;
  } else if (name == "faster") {
    c.iterations = 500;
    c.batch = 16;
  } else if (name == "desk") {
    c.iterations = 1500;
    c.batch = 16;
  } else {
    throw std::runtime_error("unknown preset: " + name);
  }
  c.decay_at = (int)std::lround(c.iterations * 2.0 / 3.0);
  return c;
}

std::array<float, 6> a6_from_rect(const calib::Rect& r, int frame_h,
                                  int frame_w) {
  auto norm = [](int px, int n) {
    return n > 1 ? 2.0f * px / (n - 1) - 1.0f : 0.0f;
  };
  float x0 = norm(r.x, frame_w), x1 = norm(r.x + r.w - 1, frame_w);
  float y0 = norm(r.y, frame_h), y1 = norm(r.y + r.h - 1, frame_h);
  return {(x1 - x0) / 2, 0.0f, (x0 + x1) / 2,
          0.0f, (y1 - y0) / 2, (y0 + y1) / 2};
}

void CompenModel::set_scene(const TensorF& surface_capture,
                            const calib::DisplayGeometry& g) {
  geom = g;
  cam_h = surface_capture.dim(1);
  cam_w = surface_capture.dim(2);
  mask = g.fov;
  surface = surface_capture;
  img::apply_mask(surface, mask);
  mask_f.resize({1, cam_h, cam_w});
  for (size_t i = 0; i < mask.numel(); ++i) mask_f[i] = mask[i] ? 1.0f : 0.0f;
}

void CompenModel::init_warp(Rng& rng, float noise) {
  const calib::Rect& r = geom.bounding_rect;
  if (r.w < 2 || r.h < 2)
    throw std::runtime_error("init: degenerate FOV bounding rectangle");
  auto a6 = a6_from_rect(r, cam_h, cam_w);
  wnet.init_train(a6.data(), rng, noise);
}

std::vector<Param<float>*> CompenModel::params(bool with_refine) {
  std::vector<Param<float>*> ps;
  if (with_refine) {
    ps = wnet.params();
  } else {
    ps = {&wnet.aff, &wnet.tps.p};
  }
  for (auto* p : pnet.params()) ps.push_back(p);
  return ps;
}

const TensorF& CompenModel::shared_forward() {
  const TensorF& grid = wnet.forward_grid();
  warped_surface.resize({3, proj_h, proj_w});
  k::bilinear_fwd(surface.ptr(), 3, cam_h, cam_w, grid.ptr(), proj_h, proj_w,
                  warped_surface.ptr());
  pnet.forward_surface(warped_surface);
  return grid;
}

void CompenModel::mask_into(const TensorF& cam, TensorF& out) const {
  out.resize(cam.shape);
  size_t hw = (size_t)cam_h * cam_w;
  for (int c = 0; c < 3; ++c)
    k::mul(cam.ptr() + c * hw, mask_f.ptr(), out.ptr() + c * hw, hw);
}

void CompenModel::compensate_masked(const TensorF& masked_cam, TensorF& warped,
                                    TensorF& out) {
  warped.resize({3, proj_h, proj_w});
  k::bilinear_fwd(masked_cam.ptr(), 3, cam_h, cam_w, wnet.gr.ptr(), proj_h,
                  proj_w, warped.ptr());
  pnet.forward(warped, out);
}

TensorF CompenModel::compensate(const TensorF& cam) {
  TensorF mx, warped, out;
  mask_into(cam, mx);
  compensate_masked(mx, warped, out);
  return out;
}

// ---- photometric pretraining ----

std::vector<double> pretrain_photometric(photo::PhotometricNet<float>& net,
                                         int iters, uint64_t seed,
                                         const std::string& cache_path) {
  if (!cache_path.empty() && fs::exists(cache_path)) {
    auto ck = nn::Checkpoint::load(cache_path);
    for (auto* p : net.params()) ck.load_param(*p);
    return {};
  }
  Rng rng(seed);
  net.init(rng);

  const int n = 128;
  // texture pools: inputs and a handful of surfaces
  std::vector<TensorF> xs, ss;
  for (int i = 0; i < 64; ++i) xs.push_back(sim::procedural_image(2000 + i, n, n));
  for (int i = 0; i < 8; ++i) ss.push_back(sim::procedural_image(1204 + i, n, n));

  nn::Adam<float> opt;
  opt.weight_decay = 1e-4f;
  opt.attach(net.params());
  nn::CompenLoss<float> lossf;

  std::vector<double> curve;
  TensorF s, x, target({3, n, n}), y, dy, dx_unused;
  const int batch = 2;
  for (int it = 1; it <= iters; ++it) {
    // half flat-gray surfaces so the learned map generalizes past textures
    if (rng.uniform() < 0.5) {
      float g = rng.uniformf(0.05f, 0.6f);
      s = img::constant_image(n, n, g, g, g);
    } else {
      s = ss[rng.below(ss.size())];
    }
    opt.zero_grad();
    net.forward_surface(s);
    double lsum = 0;
    for (int b = 0; b < batch; ++b) {
      if (rng.uniform() < 0.2) {
        float g = rng.uniformf(0.2f, 0.95f);
        x = img::constant_image(n, n, g, g, g);
      } else {
        x = xs[rng.below(xs.size())];
      }
      for (size_t i = 0; i < x.numel(); ++i)
        target[i] = std::max(0.0f, x[i] - s[i]);
      net.forward(x, y);
      lsum += lossf.forward(y, target);
      lossf.backward(y, target, dy);
      k::scale(1.0f / batch, dy.ptr(), dy.numel());
      net.backward(x, dy, nullptr);
    }
    net.surface_backward(nullptr);
    opt.step(1e-3f);
    curve.push_back(lsum / batch);
  }
  if (!cache_path.empty()) {
    nn::Checkpoint ck;
    ck.meta["kind"] = "photo-pretrain";
    ck.meta["iters"] = iters;
    ck.meta["seed"] = seed;
    for (auto* p : net.params()) ck.add_param(*p);
    fs::path dir = fs::path(cache_path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    ck.save(cache_path);
  }
  return curve;
}

// ---- curves ----

void save_curves_csv(const std::string& path,
                     const std::vector<CurveRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "iteration,loss,val_psnr,val_rmse,val_ssim\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.8f,%.6f,%.8f,%.8f\n", r.iter, r.loss,
                  r.psnr, r.rmse, r.ssim);
    f << buf;
  }
}

// ---- checkpoints ----

void save_checkpoint(const std::string& path, const CompenModel& m,
                     const TrainConfig* cfg, const nn::Adam<float>* opt,
                     int iteration, const std::string& sampler_state) {
  nn::Checkpoint ck;
  ck.meta["kind"] = "compen-model";
  ck.meta["cam_h"] = m.cam_h;
  ck.meta["cam_w"] = m.cam_w;
  ck.meta["proj_h"] = m.proj_h;
  ck.meta["proj_w"] = m.proj_w;
  ck.meta["iteration"] = iteration;
  const calib::Rect& br = m.geom.bounding_rect;
  const calib::Rect& orc = m.geom.optimal_rect;
  ck.meta["geometry"] = {
      {"bounding_rect", {br.x, br.y, br.w, br.h}},
      {"optimal_rect", {orc.x, orc.y, orc.w, orc.h}},
      {"fit_affine", m.geom.fit_affine},
  };
  auto& cm = const_cast<CompenModel&>(m);
  for (auto* p : cm.params(true)) ck.add_param(*p);
  ck.add("scene.surface", m.surface);
  ck.add("scene.mask", m.mask_f);
  if (cfg) ck.meta["config_hash"] = cfg->hash();
  if (opt) {
    ck.meta["adam_t"] = opt->t;
    ck.meta["sampler_state"] = sampler_state;
    for (size_t i = 0; i < opt->params.size(); ++i) {
      ck.add(opt->params[i]->name + ".adam_m", opt->m[i]);
      ck.add(opt->params[i]->name + ".adam_v", opt->v[i]);
    }
  }
  ck.save(path);
}

static calib::Rect rect_from_json(const nlohmann::json& j) {
  return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(),
          j.at(3).get<int>()};
}

ResumeInfo load_checkpoint(const std::string& path, CompenModel& m,
                           nn::Adam<float>* opt) {
  auto ck = nn::Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "compen-model")
    throw std::runtime_error(path + ": not a compensation checkpoint");
  if (ck.meta.at("proj_h").get<int>() != m.proj_h ||
      ck.meta.at("proj_w").get<int>() != m.proj_w)
    throw std::runtime_error(path + ": projector resolution mismatch");
  for (auto* p : m.params(true)) ck.load_param(*p);
  TensorF surf, maskf;
  ck.load_into("scene.surface", surf);
  ck.load_into("scene.mask", maskf);
  m.cam_h = surf.dim(1);
  m.cam_w = surf.dim(2);
  m.surface = surf;
  m.mask_f = maskf;
  m.mask.resize({1, m.cam_h, m.cam_w});
  for (size_t i = 0; i < maskf.numel(); ++i)
    m.mask[i] = maskf[i] >= 0.5f ? 1 : 0;
  const auto& g = ck.meta.at("geometry");
  m.geom.fov = m.mask;
  m.geom.bounding_rect = rect_from_json(g.at("bounding_rect"));
  m.geom.optimal_rect = rect_from_json(g.at("optimal_rect"));
  for (int i = 0; i < 6; ++i)
    m.geom.fit_affine[i] = g.at("fit_affine").at(i).get<float>();

  ResumeInfo info;
  info.iteration = ck.meta.value("iteration", 0);
  info.config_hash = ck.meta.value("config_hash", (uint64_t)0);
  if (opt && ck.meta.contains("adam_t")) {
    info.has_opt = true;
    info.adam_t = ck.meta.at("adam_t").get<int64_t>();
    info.sampler_state = ck.meta.at("sampler_state").get<std::string>();
    opt->t = info.adam_t;
    for (size_t i = 0; i < opt->params.size(); ++i) {
      ck.load_into(opt->params[i]->name + ".adam_m", opt->m[i]);
      ck.load_into(opt->params[i]->name + ".adam_v", opt->v[i]);
    }
  }
  return info;
}

CompenModel load_model(const std::string& path) {
  auto ck = nn::Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "compen-model")
    throw std::runtime_error(path + ": not a compensation checkpoint");
  CompenModel m(ck.meta.at("proj_h").get<int>(),
                ck.meta.at("proj_w").get<int>());
  load_checkpoint(path, m, nullptr);
  return m;
}

// ---- training loop ----

namespace {

struct ValStats {
  double loss = 0, psnr = 0, rmse = 0, ssim = 0;
};

ValStats validate(CompenModel& model, const sim::Dataset& data) {
  model.shared_forward();
  nn::CompenLoss<float> lossf;
  TensorF mx, warped, y;
  ValStats v;
  int n = (int)data.val_x.size();
  for (int j = 0; j < n; ++j) {
    model.mask_into(data.val_cam[j], mx);
    model.compensate_masked(mx, warped, y);
    v.loss += lossf.forward(y, data.val_x[j]);
    auto t = img::metrics(y, data.val_x[j]);
    v.psnr += t.psnr;
    v.rmse += t.rmse;
    v.ssim += t.ssim;
  }
  v.loss /= n;
  v.psnr /= n;
  v.rmse /= n;
  v.ssim /= n;
  return v;
}

}  // namespace

TrainResult train(CompenModel& model, const sim::Dataset& data,
                  const TrainConfig& cfg, const std::string& run_dir,
                  bool resume) {
  cfg.check();
  if (data.train_x.empty() || data.val_x.empty())
    throw std::runtime_error("train: dataset has empty splits");
  auto t0 = std::chrono::steady_clock::now();

  nn::Adam<float> opt;
  opt.weight_decay = cfg.weight_decay;
  opt.attach(model.params(cfg.refine_enabled));
  if (!cfg.refine_enabled)  // ablation: refinement frozen at exact identity
    for (auto* p : model.wnet.refine.params()) p->value.zero();

  Rng sampler(cfg.seed * 0x9e3779b97f4a7c15ull + 1);

  TrainResult res;
  int start_it = 0;
  std::string ckpt_path =
      run_dir.empty() ? "" : run_dir + "/checkpoint.pcpk";
  std::string curve_path = run_dir.empty() ? "" : run_dir + "/curves.csv";
  if (!run_dir.empty()) fs::create_directories(run_dir);

  if (resume) {
    if (ckpt_path.empty() || !fs::exists(ckpt_path))
      throw std::runtime_error("resume requested but no checkpoint found");
    ResumeInfo info = load_checkpoint(ckpt_path, model, &opt);
    if (!info.has_opt)
      throw std::runtime_error("resume: checkpoint has no optimizer state");
    if (info.config_hash != cfg.hash())
      throw std::runtime_error("resume: config differs from checkpoint");
    sampler.load_state(info.sampler_state);
    start_it = info.iteration;
    res.start_iteration = start_it;
    // keep the earlier curve rows so the CSV stays complete across legs
    std::ifstream f(curve_path);
    if (f) {
      std::string line;
      std::getline(f, line);  // header
      CurveRow r;
      while (std::getline(f, line)) {
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &r.iter, &r.loss,
                        &r.psnr, &r.rmse, &r.ssim) == 5 &&
            r.iter <= start_it)
          res.curve.push_back(r);
      }
    }
  }

  const int B = cfg.batch;
  const int n_train = (int)data.train_x.size();
  nn::CompenLoss<float> lossf;
  TensorF mx, warped, y, dy, dwarped, dsw;
  TensorF dgrid({2, model.proj_h, model.proj_w});

  auto log_row = [&](int it) {
    ValStats v = validate(model, data);
    res.curve.push_back({it, v.loss, v.psnr, v.rmse, v.ssim});
    if (!curve_path.empty()) save_curves_csv(curve_path, res.curve);
    if (!ckpt_path.empty())
      save_checkpoint(ckpt_path, model, &cfg, &opt, it, sampler.save_state());
  };

  if (start_it == 0) log_row(0);

  for (int it = start_it + 1; it <= cfg.iterations; ++it) {
    float lr = it < cfg.decay_at ? cfg.lr : cfg.lr_after_decay;
    opt.zero_grad();
    const TensorF& grid = model.shared_forward();
    dgrid.zero();
    double lsum = 0;
    for (int b = 0; b < B; ++b) {
      int idx = (int)sampler.below((uint64_t)n_train);
      model.mask_into(data.train_cam[idx], mx);
      model.compensate_masked(mx, warped, y);
      lsum += lossf.forward(y, data.train_x[idx]);
      lossf.backward(y, data.train_x[idx], dy);
      k::scale(1.0f / B, dy.ptr(), dy.numel());
      model.pnet.backward(warped, dy, &dwarped);
      k::bilinear_bwd(mx.ptr(), 3, model.cam_h, model.cam_w, grid.ptr(),
                      model.proj_h, model.proj_w, dwarped.ptr(),
                      (float*)nullptr, dgrid.ptr());
    }
    double loss = lsum / B;
    if (!std::isfinite(loss)) {
      char msg[128];
      std::snprintf(msg, sizeof msg,
                    "training diverged: non-finite loss at iteration %d", it);
      throw std::runtime_error(msg);
    }
    // surface path: the warped surface feeds the photometric net too, so its
    // accumulated gradient flows back into the grid as well
    model.pnet.surface_backward(&dsw);
    k::bilinear_bwd(model.surface.ptr(), 3, model.cam_h, model.cam_w,
                    grid.ptr(), model.proj_h, model.proj_w, dsw.ptr(),
                    (float*)nullptr, dgrid.ptr());
    model.wnet.backward_grid(dgrid);
    opt.step(lr);

    // clamped outputs keep the loss finite even after the weights blow up, so
    // divergence has to be caught on the parameters themselves
    for (auto* p : opt.params)
      for (size_t i = 0; i < p->value.numel(); ++i)
        if (!std::isfinite(p->value[i])) {
          char msg[160];
          std::snprintf(msg, sizeof msg,
                        "training diverged: non-finite value in %s at "
                        "iteration %d",
                        p->name.c_str(), it);
          throw std::runtime_error(msg);
        }

    if (it % cfg.val_every == 0 || it == cfg.iterations) log_row(it);
  }

  res.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

// ---- simplified deployment model ----

TensorF SimplifiedModel::compensate(const TensorF& cam) {
  TensorF mx(cam.shape), warped, out;
  size_t hw = (size_t)cam_h * cam_w;
  for (int c = 0; c < 3; ++c)
    k::mul(cam.ptr() + c * hw, mask_f.ptr(), mx.ptr() + c * hw, hw);
  warp::warp_with_grid(grid, mx, warped);
  net.forward(warped, out);
  return out;
}

void SimplifiedModel::save(const std::string& path) const {
  nn::Checkpoint ck;
  ck.meta["kind"] = "simplified-model";
  ck.meta["cam_h"] = cam_h;
  ck.meta["cam_w"] = cam_w;
  ck.meta["proj_h"] = grid.dim(1);
  ck.meta["proj_w"] = grid.dim(2);
  const calib::Rect& br = geom.bounding_rect;
  const calib::Rect& orc = geom.optimal_rect;
  ck.meta["geometry"] = {
      {"bounding_rect", {br.x, br.y, br.w, br.h}},
      {"optimal_rect", {orc.x, orc.y, orc.w, orc.h}},
      {"fit_affine", geom.fit_affine},
  };
  ck.add("grid", grid);
  ck.add("scene.mask", mask_f);
  auto& bb = const_cast<photo::PhotoBackbone<float>&>(net.bb);
  for (auto* p : bb.params()) ck.add_param(*p);
  ck.add("merge.s1", net.bb.s1);
  ck.add("merge.s2", net.bb.s2);
  ck.add("merge.s3", net.bb.s3);
  ck.save(path);
}

SimplifiedModel SimplifiedModel::load(const std::string& path) {
  auto ck = nn::Checkpoint::load(path);
  if (ck.meta.value("kind", "") != "simplified-model")
    throw std::runtime_error(path + ": not a simplified checkpoint");
  SimplifiedModel s;
  s.cam_h = ck.meta.at("cam_h").get<int>();
  s.cam_w = ck.meta.at("cam_w").get<int>();
  ck.load_into("grid", s.grid);
  ck.load_into("scene.mask", s.mask_f);
  s.mask.resize({1, s.cam_h, s.cam_w});
  for (size_t i = 0; i < s.mask_f.numel(); ++i)
    s.mask[i] = s.mask_f[i] >= 0.5f ? 1 : 0;
  for (auto* p : s.net.bb.params()) ck.load_param(*p);
  ck.load_into("merge.s1", s.net.bb.s1);
  ck.load_into("merge.s2", s.net.bb.s2);
  ck.load_into("merge.s3", s.net.bb.s3);
  s.net.surf_h = ck.meta.at("proj_h").get<int>();
  s.net.surf_w = ck.meta.at("proj_w").get<int>();
  const auto& g = ck.meta.at("geometry");
  s.geom.fov = s.mask;
  s.geom.bounding_rect = rect_from_json(g.at("bounding_rect"));
  s.geom.optimal_rect = rect_from_json(g.at("optimal_rect"));
  for (int i = 0; i < 6; ++i)
    s.geom.fit_affine[i] = g.at("fit_affine").at(i).get<float>();
  return s;
}

SimplifiedModel simplify(CompenModel& m) {
  SimplifiedModel s;
  s.cam_h = m.cam_h;
  s.cam_w = m.cam_w;
  s.grid = m.wnet.simplify();
  TensorF ws({3, m.proj_h, m.proj_w});
  k::bilinear_fwd(m.surface.ptr(), 3, m.cam_h, m.cam_w, s.grid.ptr(),
                  m.proj_h, m.proj_w, ws.ptr());
  s.net = photo::trim_surface_branch(m.pnet, ws);
  s.mask = m.mask;
  s.mask_f = m.mask_f;
  s.geom = m.geom;
  return s;
}

}  // namespace procomp::train
