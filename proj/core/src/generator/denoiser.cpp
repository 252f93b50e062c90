#include "augsynth/generator/denoiser.hpp"

#include <cmath>

#include "augsynth/error.hpp"

namespace augsynth::gen {

void DenoiserConfig::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0 || embed_dim <= 0 || time_features <= 0 || cond_width <= 0 ||
      base_channels <= 0 || blocks < 0 || num_classes <= 0)
    throw ConfigError("denoiser dimensions must be positive");
  if (height % 2 != 0 || width % 2 != 0) throw ConfigError("denoiser needs even image height and width");
  if (time_features % 2 != 0) throw ConfigError("time_features must be even");
  if (!(null_probability >= 0.0 && null_probability <= 1.0))
    throw ConfigError("null_probability must lie in [0,1]");
}

nn::Matrix timestep_features(std::span<const int> timesteps, int dim) {
  nn::Matrix f(static_cast<Eigen::Index>(timesteps.size()), dim);
  const int half = dim / 2;
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    for (int j = 0; j < half; ++j) {
      const double freq = std::exp(-std::log(10000.0) * j / half);
      const double arg = timesteps[i] * freq;
      f(static_cast<Eigen::Index>(i), j) = static_cast<float>(std::sin(arg));
      f(static_cast<Eigen::Index>(i), half + j) = static_cast<float>(std::cos(arg));
    }
  }
  return f;
}

// h + conv2(silu(conv1(silu(h)) + bias(cond))), bias broadcast over pixels.
struct Denoiser::ResBlock {
  int channels, hw;
  nn::Conv2d conv1, conv2;
  nn::Linear cond;
  nn::SiLU act1, act2;

  ResBlock(int c, int h, int w, int cond_in, Rng& rng, const std::string& name)
      : channels(c),
        hw(h * w),
        conv1(c, c, 3, h, w, rng, name + ".conv1"),
        conv2(c, c, 3, h, w, rng, name + ".conv2"),
        cond(cond_in, c, rng, name + ".cond") {
    // Residual branches start near zero so the stack begins close to identity.
    conv2.params()[0]->value *= 0.1f;
  }

  nn::ParamList params() {
    nn::ParamList p = conv1.params();
    for (auto* q : conv2.params()) p.push_back(q);
    for (auto* q : cond.params()) p.push_back(q);
    return p;
  }

  nn::Matrix forward(const nn::Matrix& h, const nn::Matrix& c) {
    nn::Matrix r = conv1.forward(act1.forward(h));
    const nn::Matrix bias = cond.forward(c);
    for (Eigen::Index b = 0; b < r.rows(); ++b)
      for (int ch = 0; ch < channels; ++ch) r.row(b).segment(ch * hw, hw).array() += bias(b, ch);
    return h + conv2.forward(act2.forward(r));
  }

  // Returns dL/dh; accumulates dL/dc into gcond.
  nn::Matrix backward(const nn::Matrix& g, nn::Matrix& gcond) {
    const nn::Matrix gr = act2.backward(conv2.backward(g));
    nn::Matrix gbias(gr.rows(), channels);
    for (Eigen::Index b = 0; b < gr.rows(); ++b)
      for (int ch = 0; ch < channels; ++ch) gbias(b, ch) = gr.row(b).segment(ch * hw, hw).sum();
    gcond += cond.backward(gbias);
    return g + act1.backward(conv1.backward(gr));
  }
};

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(init_seed);
  const int cw = cfg.cond_width;
  const int c1 = cfg.base_channels, c2 = 2 * cfg.base_channels;
  const int h = cfg.height, w = cfg.width;
  time_proj_ = std::make_unique<nn::Linear>(cfg.time_features, cw, rng, "time_proj");
  img_proj_ = std::make_unique<nn::Linear>(cfg.embed_dim, cw, rng, "img_proj");
  class_embed_.name = "class_embed";
  class_embed_.value = nn::Matrix(cfg.num_classes + 1, cw);
  for (Eigen::Index i = 0; i < class_embed_.value.size(); ++i)
    class_embed_.value.data()[i] = static_cast<float>(0.1 * rng.normal());
  class_embed_.zero_grad();
  null_embed_.name = "null_embed";
  null_embed_.value = nn::Matrix(1, cfg.embed_dim);
  for (Eigen::Index i = 0; i < null_embed_.value.size(); ++i)
    null_embed_.value.data()[i] = static_cast<float>(0.1 * rng.normal());
  null_embed_.zero_grad();

  conv_in_ = std::make_unique<nn::Conv2d>(cfg.channels, c1, 3, h, w, rng, "conv_in");
  down_block_ = std::make_unique<ResBlock>(c1, h, w, 2 * cw, rng, "down");
  pool_ = std::make_unique<nn::AvgPool2>(c1, h, w);
  widen_ = std::make_unique<nn::Conv2d>(c1, c2, 3, h / 2, w / 2, rng, "widen");
  for (int b = 0; b < cfg.blocks; ++b)
    mid_blocks_.push_back(std::make_unique<ResBlock>(c2, h / 2, w / 2, 2 * cw, rng, "mid" + std::to_string(b)));
  up_ = std::make_unique<nn::Upsample2>(c2, h / 2, w / 2);
  merge_ = std::make_unique<nn::Conv2d>(c1 + c2, c1, 3, h, w, rng, "merge");
  up_block_ = std::make_unique<ResBlock>(c1, h, w, 2 * cw, rng, "up");
  conv_out_ = std::make_unique<nn::Conv2d>(c1, cfg.channels, 3, h, w, rng, "conv_out");
  conv_out_->params()[0]->value *= 0.1f;
}

Denoiser::~Denoiser() = default;

nn::ParamList Denoiser::params() {
  nn::ParamList p;
  auto add = [&](nn::ParamList lp) { p.insert(p.end(), lp.begin(), lp.end()); };
  add(time_proj_->params());
  add(img_proj_->params());
  p.push_back(&class_embed_);
  p.push_back(&null_embed_);
  add(conv_in_->params());
  add(down_block_->params());
  add(widen_->params());
  for (auto& b : mid_blocks_) add(b->params());
  add(merge_->params());
  add(up_block_->params());
  add(conv_out_->params());
  return p;
}

nn::Matrix Denoiser::forward(const nn::Matrix& x_t, std::span<const int> timesteps, const DenoiserCondition& cond) {
  const Eigen::Index batch = x_t.rows();
  if (x_t.cols() != cfg_.pixels()) throw ParameterError("denoiser input width mismatch");
  if (static_cast<Eigen::Index>(timesteps.size()) != batch || static_cast<Eigen::Index>(cond.labels.size()) != batch ||
      static_cast<Eigen::Index>(cond.is_null.size()) != batch || cond.embeddings.rows() != batch ||
      cond.embeddings.cols() != cfg_.embed_dim)
    throw ParameterError("denoiser conditioning does not match batch");
  const int cw = cfg_.cond_width;

  rows_class_.resize(static_cast<std::size_t>(batch));
  rows_null_ = cond.is_null;
  nn::Matrix img_in = cond.embeddings;
  for (Eigen::Index r = 0; r < batch; ++r) {
    const bool null = cond.is_null[static_cast<std::size_t>(r)] != 0;
    const int label = cond.labels[static_cast<std::size_t>(r)];
    if (!null && (label < 0 || label >= cfg_.num_classes)) throw ParameterError("class label out of range");
    rows_class_[static_cast<std::size_t>(r)] = null ? cfg_.num_classes : label;
    if (null) img_in.row(r) = null_embed_.value.row(0);
  }

  nn::Matrix cond_vec(batch, 2 * cw);
  cond_vec.leftCols(cw) = time_proj_->forward(timestep_features(timesteps, cfg_.time_features));
  nn::Matrix img_h = img_proj_->forward(img_in);
  for (Eigen::Index r = 0; r < batch; ++r) img_h.row(r) += class_embed_.value.row(rows_class_[static_cast<std::size_t>(r)]);
  cond_vec.rightCols(cw) = img_h;
  cond_act_out_ = cond_act_.forward(cond_vec);
  const nn::Matrix& c = cond_act_out_;

  const nn::Matrix skip = down_block_->forward(conv_in_->forward(x_t), c);
  nn::Matrix low = widen_->forward(pool_->forward(skip));
  for (auto& b : mid_blocks_) low = b->forward(low, c);
  nn::Matrix cat(batch, skip.cols() + low.cols() * 4);
  cat.leftCols(skip.cols()) = skip;
  cat.rightCols(low.cols() * 4) = up_->forward(low);
  const nn::Matrix h = up_block_->forward(merge_->forward(cat), c);
  nn::Matrix out = conv_out_->forward(out_act_.forward(h));

  if (!input_skip_.empty()) {
    for (Eigen::Index r = 0; r < batch; ++r) {
      const auto t = static_cast<std::size_t>(timesteps[static_cast<std::size_t>(r)]);
      if (t >= input_skip_.size()) throw ParameterError("timestep beyond the input-skip table");
      out.row(r) += input_skip_[t] * x_t.row(r);
    }
  }
  return out;
}

void Denoiser::backward(const nn::Matrix& grad_eps) {
  const int cw = cfg_.cond_width;
  nn::Matrix gcond = nn::Matrix::Zero(cond_act_out_.rows(), cond_act_out_.cols());

  const nn::Matrix gh = out_act_.backward(conv_out_->backward(grad_eps));
  const nn::Matrix gcat = merge_->backward(up_block_->backward(gh, gcond));
  const Eigen::Index skip_cols = static_cast<Eigen::Index>(cfg_.base_channels) * cfg_.height * cfg_.width;
  nn::Matrix glow = up_->backward(gcat.rightCols(gcat.cols() - skip_cols));
  for (auto it = mid_blocks_.rbegin(); it != mid_blocks_.rend(); ++it) glow = (*it)->backward(glow, gcond);
  nn::Matrix gskip = gcat.leftCols(skip_cols) + pool_->backward(widen_->backward(glow));
  conv_in_->backward(down_block_->backward(gskip, gcond));  // input gradient unused

  const nn::Matrix gvec = cond_act_.backward(gcond);
  time_proj_->backward(gvec.leftCols(cw));
  const nn::Matrix gimg_h = gvec.rightCols(cw);
  for (Eigen::Index r = 0; r < gimg_h.rows(); ++r)
    class_embed_.grad.row(rows_class_[static_cast<std::size_t>(r)]) += gimg_h.row(r);
  const nn::Matrix gimg_in = img_proj_->backward(gimg_h);
  for (Eigen::Index r = 0; r < gimg_in.rows(); ++r)
    if (rows_null_[static_cast<std::size_t>(r)] != 0) null_embed_.grad.row(0) += gimg_in.row(r);
}

}  // namespace augsynth::gen
