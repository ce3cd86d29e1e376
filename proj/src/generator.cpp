// Copyright Contributors to the inv3d Project
// SPDX-License-Identifier: Apache-2.0
#include "inv3d/generator.hpp"

#include "inv3d/checkpoint.hpp"
#include "inv3d/volume.hpp"

namespace inv3d {

using torch::indexing::Ellipsis;
using torch::indexing::Slice;

StyledSineLayerImpl::StyledSineLayerImpl(int in_dim, int out_dim, int latent_dim) {
  linear = register_module("linear", torch::nn::Linear(in_dim, out_dim));
  to_scale = register_module("to_scale", torch::nn::Linear(latent_dim, out_dim));
  to_shift = register_module("to_shift", torch::nn::Linear(latent_dim, out_dim));
  torch::NoGradGuard guard;
  to_scale->bias.zero_();
  to_shift->bias.zero_();
}

torch::Tensor StyledSineLayerImpl::forward(const torch::Tensor& x, const torch::Tensor& w_layer) {
  auto gamma = 1.0 + to_scale(w_layer).unsqueeze(1);  // [B,1,out]
  auto beta = to_shift(w_layer).unsqueeze(1);
  return torch::sin(gamma * linear(x) + beta);
}

MappingNetworkImpl::MappingNetworkImpl(int latent_dim, int n_layers) {
  for (int i = 0; i < n_layers; ++i) {
    net->push_back(torch::nn::Linear(latent_dim, latent_dim));
    if (i + 1 < n_layers) {
      net->push_back(torch::nn::Functional(torch::leaky_relu, 0.2));
    }
  }
  register_module("net", net);
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z) { return net->forward(z); }

SuperResolverImpl::SuperResolverImpl(const GeneratorConfig& cfg) : upsample(cfg.upsample) {
  int in_ch = cfg.feature_channels;
  for (int i = 0; i < cfg.g1_layers; ++i) {
    convs->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in_ch, cfg.g1_channels, 3).padding(1)));
    to_scales->push_back(torch::nn::Linear(cfg.latent_dim, cfg.g1_channels));
    to_shifts->push_back(torch::nn::Linear(cfg.latent_dim, cfg.g1_channels));
    in_ch = cfg.g1_channels;
  }
  register_module("convs", convs);
  register_module("to_scales", to_scales);
  register_module("to_shifts", to_shifts);
  to_rgb = register_module("to_rgb", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_ch, 3, 1)));
  torch::NoGradGuard guard;
  for (auto& m : to_scales->children()) {
    m->as<torch::nn::Linear>()->bias.zero_();
  }
  for (auto& m : to_shifts->children()) {
    m->as<torch::nn::Linear>()->bias.zero_();
  }
}

torch::Tensor SuperResolverImpl::forward(const torch::Tensor& features,
                                         const torch::Tensor& w_codes) {
  if (features.dim() != 4) {
    throw std::invalid_argument("SuperResolver: expected [B,C,H,W] features");
  }
  if (w_codes.size(1) != static_cast<std::int64_t>(convs->size())) {
    throw std::invalid_argument("SuperResolver: wrong number of style codes");
  }
  const std::int64_t target = features.size(2) * upsample;
  auto h = features;
  for (std::size_t i = 0; i < convs->size(); ++i) {
    auto w_layer = w_codes.select(1, static_cast<std::int64_t>(i));
    h = convs[i]->as<torch::nn::Conv2d>()->forward(h);
    auto gamma =
        (1.0 + to_scales[i]->as<torch::nn::Linear>()->forward(w_layer)).unsqueeze(-1).unsqueeze(-1);
    auto beta = to_shifts[i]->as<torch::nn::Linear>()->forward(w_layer).unsqueeze(-1).unsqueeze(-1);
    h = torch::leaky_relu(gamma * h + beta, 0.2);
    if (h.size(2) < target) {
      h = torch::nn::functional::interpolate(
          h, torch::nn::functional::InterpolateFuncOptions()
                 .scale_factor(std::vector<double>{2.0, 2.0})
                 .mode(torch::kNearest));
    }
  }
  return torch::sigmoid(to_rgb(h));
}

DiscriminatorImpl::DiscriminatorImpl(const GeneratorConfig& cfg)
    : expected_size(cfg.image_size_hi()) {
  int size = cfg.image_size_hi();
  int ch = cfg.disc_channels;
  int in_ch = 3;
  while (size > 4) {
    body->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in_ch, ch, 3).stride(2).padding(1)));
    body->push_back(torch::nn::Functional(torch::leaky_relu, 0.2));
    in_ch = ch;
    ch = std::min(ch * 2, 128);
    size /= 2;
  }
  register_module("body", body);
  head = register_module("head", torch::nn::Linear(in_ch * size * size, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3 || images.size(2) != expected_size ||
      images.size(3) != expected_size) {
    std::ostringstream os;
    os << "Discriminator: expected [B,3," << expected_size << "," << expected_size << "], got "
       << images.sizes();
    throw std::invalid_argument(os.str());
  }
  auto h = body->forward(images);
  return head(h.flatten(1)).squeeze(-1);
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& cfg_in, const SceneConfig& scene_in)
    : cfg(cfg_in), scene(scene_in) {
  mapping = register_module("mapping", MappingNetwork(cfg.latent_dim, cfg.mapping_layers));
  const int pe_width = positional_encode_width(3, cfg.pe_frequencies);
  int in_dim = pe_width;
  for (int i = 0; i < cfg.g0_layers; ++i) {
    trunk->push_back(StyledSineLayer(in_dim, cfg.trunk_width, cfg.latent_dim));
    in_dim = cfg.trunk_width;
  }
  register_module("trunk", trunk);
  sdf_head = register_module("sdf_head", torch::nn::Linear(cfg.trunk_width, 1));
  feat_in = register_module("feat_in", torch::nn::Linear(cfg.trunk_width + 3 + 3, cfg.trunk_width));
  feat_out = register_module("feat_out", torch::nn::Linear(cfg.trunk_width, cfg.feature_channels));
  color_head = register_module("color_head", torch::nn::Linear(cfg.feature_channels, 3));
  g1 = register_module("g1", SuperResolver(cfg));
  log_alpha = register_parameter("log_alpha", torch::tensor({std::log(cfg.alpha_init)}, f64()));

  torch::NoGradGuard guard;
  // Wider heads give visibly distinct shapes/colors across latents at init.
  sdf_head->weight.normal_(0.0, 1.5 / std::sqrt(static_cast<double>(cfg.trunk_width)));
  sdf_head->bias.zero_();
  color_head->weight.normal_(0.0, 2.0 / std::sqrt(static_cast<double>(cfg.feature_channels)));
  this->to(torch::kFloat64);
}

torch::Tensor GeneratorImpl::sample_z(int n, Rng& rng) const {
  if (n < 1) {
    throw std::invalid_argument("sample_z: n must be >= 1");
  }
  return rng.normal({n, cfg.latent_dim});
}

torch::Tensor GeneratorImpl::sample_latent(int n, Rng& rng) {
  torch::NoGradGuard guard;
  return mapping(sample_z(n, rng));
}

torch::Tensor GeneratorImpl::expand_codes(const torch::Tensor& w) const {
  if (w.dim() == 3) {
    if (w.size(1) != cfg.total_layers()) {
      throw std::invalid_argument("expand_codes: expected " + std::to_string(cfg.total_layers()) +
                                  " per-layer codes, got " + std::to_string(w.size(1)));
    }
    return w;
  }
  if (w.dim() == 1) {
    return w.unsqueeze(0).unsqueeze(0).expand({1, cfg.total_layers(), w.size(0)});
  }
  return w.unsqueeze(1).expand({w.size(0), cfg.total_layers(), w.size(1)});
}

PointDecode GeneratorImpl::decode_points(const torch::Tensor& w_codes, const torch::Tensor& points,
                                         const torch::Tensor& view_dirs,
                                         const PointModulator& modulator, bool geometry_only) {
  if (points.dim() != 3 || points.size(-1) != 3) {
    throw std::invalid_argument("decode_points: points must be [B,N,3]");
  }
  auto codes = expand_codes(w_codes);
  if (codes.size(0) != points.size(0)) {
    throw std::invalid_argument("decode_points: batch mismatch between codes and points");
  }

  auto h = positional_encode(points, cfg.pe_frequencies);
  for (std::size_t i = 0; i < trunk->size(); ++i) {
    h = trunk[i]->as<StyledSineLayerImpl>()->forward(h, codes.select(1, static_cast<std::int64_t>(i)));
  }

  PointDecode out;
  out.f_g = torch::cat({h, points}, -1);

  auto base = points.norm(2, -1, true) - cfg.sphere_radius;
  out.sdf = cfg.displacement_scale * torch::tanh(sdf_head(h)) + base;
  if (geometry_only) {
    return out;
  }

  auto modulated = modulator ? modulator(out.f_g, points) : out.f_g;
  torch::Tensor dirs = view_dirs;
  if (!dirs.defined()) {
    dirs = torch::zeros_like(points);
  }
  auto f = feat_out(torch::sin(feat_in(torch::cat({modulated, dirs}, -1))));
  out.feature = f;
  out.color = torch::sigmoid(color_head(f));
  return out;
}

torch::Tensor GeneratorImpl::sdf(const torch::Tensor& w_codes, const torch::Tensor& points) {
  return decode_points(w_codes, points, {}, nullptr, /*geometry_only=*/true).sdf;
}

RenderResult GeneratorImpl::render(const torch::Tensor& w_codes, const CameraPose& pose,
                                   const RenderSettings& settings, const PointModulator& modulator) {
  return render(w_codes, std::vector<CameraPose>{pose}, settings, modulator);
}

RenderResult GeneratorImpl::render(const torch::Tensor& w_codes, const std::vector<CameraPose>& poses,
                                   const RenderSettings& settings, const PointModulator& modulator) {
  auto codes = expand_codes(w_codes);
  const auto batch = static_cast<std::int64_t>(poses.size());
  if (codes.size(0) != batch) {
    throw std::invalid_argument("render: need one pose per latent code");
  }
  const int height = settings.height > 0 ? settings.height : cfg.image_size_lo;
  const int width = settings.width > 0 ? settings.width : cfg.image_size_lo;
  const int n_samples = settings.n_samples > 0 ? settings.n_samples : cfg.ray_samples;

  std::vector<torch::Tensor> origins, directions, depths;
  origins.reserve(poses.size());
  for (const auto& pose : poses) {
    auto rays = generate_rays(pose, height, width, n_samples, settings.stratified, scene.near(),
                              scene.far(), settings.gen);
    origins.push_back(rays.origins);
    directions.push_back(rays.directions);
    depths.push_back(rays.sample_depths);
  }
  auto origin_b = torch::stack(origins);        // [B,H,W,3]
  auto dir_b = torch::stack(directions);        // [B,H,W,3]
  auto depth_b = torch::stack(depths);          // [B,H,W,N]

  const std::int64_t rays_per = static_cast<std::int64_t>(height) * width;
  auto pts = origin_b.reshape({batch, rays_per, 1, 3}) +
             depth_b.reshape({batch, rays_per, n_samples, 1}) *
                 dir_b.reshape({batch, rays_per, 1, 3});
  auto pts_flat = pts.reshape({batch, rays_per * n_samples, 3});
  auto view_flat = dir_b.reshape({batch, rays_per, 1, 3})
                       .expand({batch, rays_per, n_samples, 3})
                       .reshape({batch, rays_per * n_samples, 3});

  auto decoded = decode_points(codes, pts_flat, view_flat, modulator);
  auto sdf_v = decoded.sdf.reshape({batch, rays_per, n_samples});
  auto color = decoded.color.reshape({batch, rays_per, n_samples, 3});
  auto feature = decoded.feature.reshape({batch, rays_per, n_samples, cfg.feature_channels});

  auto densities = sdf_to_density(sdf_v, alpha());
  auto values = torch::cat({color, feature}, -1);
  auto flat_depths = depth_b.reshape({batch, rays_per, n_samples});
  auto integ = volume_integrate(values, densities, flat_depths, scene.far());

  auto weight_sum = integ.weights.sum(-1);  // [B,R]
  auto bg = torch::tensor({scene.background[0], scene.background[1], scene.background[2]}, f64());
  auto rgb = integ.integrated.index({Ellipsis, Slice(0, 3)}) +
             (1.0 - weight_sum).unsqueeze(-1) * bg.reshape({1, 1, 3});
  auto feat_map = integ.integrated.index({Ellipsis, Slice(3, 3 + cfg.feature_channels)});

  auto raw_depth = (integ.weights * flat_depths).sum(-1);
  auto alive = weight_sum >= scene.empty_ray_threshold;
  auto depth_map = torch::where(alive, raw_depth, torch::zeros_like(raw_depth));

  RenderResult out;
  out.image_lo =
      rgb.reshape({batch, height, width, 3}).permute({0, 3, 1, 2}).contiguous();
  out.feature_map =
      feat_map.reshape({batch, height, width, cfg.feature_channels}).permute({0, 3, 1, 2}).contiguous();
  out.depth = depth_map.reshape({batch, height, width});
  out.raw_depth = raw_depth.reshape({batch, height, width});
  out.weight_sum = weight_sum.reshape({batch, height, width});
  out.transmittance = integ.transmittance.reshape({batch, height, width, n_samples});
  out.origins = origin_b;
  out.directions = dir_b;
  out.sample_depths = depth_b;
  if (settings.with_hi) {
    out.image_hi = g1(out.feature_map, codes.index({Slice(), Slice(cfg.g0_layers, torch::indexing::None)}));
  }
  return out;
}

Generator make_generator(const GeneratorConfig& cfg, const SceneConfig& scene, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Generator(cfg, scene);
}

Discriminator make_discriminator(const GeneratorConfig& cfg, std::uint64_t seed) {
  torch::manual_seed(seed + 0x5eed);
  auto d = Discriminator(cfg);
  d->to(torch::kFloat64);
  return d;
}

void save_generator_checkpoint(const std::filesystem::path& path, const Generator& gen,
                               const Discriminator& disc, std::int64_t step) {
  TensorStore store;
  store.meta["kind"] = "generator";
  store.meta["step"] = step;
  store.meta["latent_dim"] = gen->cfg.latent_dim;
  store.meta["g0_layers"] = gen->cfg.g0_layers;
  store.meta["g1_layers"] = gen->cfg.g1_layers;
  store.meta["image_size_lo"] = gen->cfg.image_size_lo;
  store.meta["image_size_hi"] = gen->cfg.image_size_hi();
  store.meta["ray_samples"] = gen->cfg.ray_samples;
  store.meta["alpha"] = gen->alpha().item<double>();
  {  // full dimension record so loading is self-contained
    nlohmann::json g;
    const auto& c = gen->cfg;
    g = {{"latent_dim", c.latent_dim},       {"g0_layers", c.g0_layers},
         {"g1_layers", c.g1_layers},         {"mapping_layers", c.mapping_layers},
         {"trunk_width", c.trunk_width},     {"feature_channels", c.feature_channels},
         {"pe_frequencies", c.pe_frequencies}, {"image_size_lo", c.image_size_lo},
         {"upsample", c.upsample},           {"g1_channels", c.g1_channels},
         {"disc_channels", c.disc_channels}, {"alpha_init", c.alpha_init},
         {"sphere_radius", c.sphere_radius}, {"displacement_scale", c.displacement_scale},
         {"ray_samples", c.ray_samples},     {"stratified", c.stratified}};
    store.meta["generator_config"] = g;
    const auto& s = gen->scene;
    store.meta["scene_config"] = {{"radius", s.radius},
                                  {"camera_radius", s.camera_radius},
                                  {"fov", s.fov},
                                  {"t_near", s.t_near},
                                  {"t_far", s.t_far},
                                  {"background", s.background},
                                  {"empty_ray_threshold", s.empty_ray_threshold}};
  }
  store_module(store, "generator", *gen);
  store_module(store, "discriminator", *disc);
  save_store(path, store);
}

GeneratorCheckpoint load_generator_checkpoint(const std::filesystem::path& path) {
  auto store = load_store(path);
  if (store.meta.value("kind", "") != "generator") {
    throw CheckpointError("not a generator checkpoint: " + path.string());
  }
  nlohmann::json wrapper;
  wrapper["generator"] = store.meta.at("generator_config");
  wrapper["scene"] = store.meta.at("scene_config");
  auto cfg = RunConfig::from_json(wrapper);

  GeneratorCheckpoint out;
  out.generator = Generator(cfg.generator, cfg.scene);
  out.discriminator = Discriminator(cfg.generator);
  out.discriminator->to(torch::kFloat64);
  load_module(store, "generator", *out.generator);
  load_module(store, "discriminator", *out.discriminator);
  out.step = store.meta.value("step", 0);
  return out;
}

}  // namespace inv3d
