#include "xmlc/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "xmlc/errors.hpp"
#include "xmlc/ops.hpp"

namespace xmlc {

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Var activate(Var x, Activation a) { return a == Activation::Relu ? ops::relu(x) : ops::tanh(x); }

void EncoderConfig::validate() const {
  if (kernel < 1 || kernel % 2 == 0)
    throw ConfigError("filter size must be odd and positive, got " + std::to_string(kernel));
  if (rates.empty()) throw ConfigError("dilation rate list is empty");
  for (int r : rates)
    if (r < 1) throw ConfigError("dilation rates must be >= 1, got " + std::to_string(r));
  if (num_blocks < 0) throw ConfigError("num_blocks must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

int EncoderConfig::receptive_radius() const {
  int per_block = 0;
  for (int r : rates) per_block += causal ? r * (kernel - 1) : r * (kernel - 1) / 2;
  return per_block * num_blocks;
}

BlockParams init_block(std::size_t dim, const EncoderConfig& cfg, Rng& rng,
                       const std::string& prefix) {
  cfg.validate();
  const std::size_t K = static_cast<std::size_t>(cfg.kernel);
  // Xavier-uniform over fan_in = K·d, fan_out = d.
  const double bound = std::sqrt(6.0 / static_cast<double>(K * dim + dim));
  auto make = [&](const std::string& name) {
    Tensor f({K, dim, dim});
    for (double& v : f.data()) v = rng.uniform(-bound, bound);
    return Parameter(name, std::move(f));
  };
  BlockParams b;
  for (std::size_t i = 0; i < cfg.rates.size(); ++i)
    b.levels.push_back(make(prefix + ".level" + std::to_string(i)));
  b.residual = make(prefix + ".residual");
  return b;
}

namespace {

bool has_padding(std::span<const double> valid) {
  return std::any_of(valid.begin(), valid.end(), [](double v) { return v == 0.0; });
}

Var zero_padded_rows(Var x, std::span<const double> valid) {
  if (!has_padding(valid)) return x;
  if (valid.size() != x.shape()[0])
    throw DimensionError("validity mask length " + std::to_string(valid.size()) +
                         " does not match sequence of " + to_string(x.shape()));
  Tensor v({valid.size()}, std::vector<double>(valid.begin(), valid.end()));
  return ops::broadcast_mul(x, x.tape().constant(std::move(v)));
}

}  // namespace

Var conv_level(Var x, Var filters, int rate, const EncoderConfig& cfg) {
  if (cfg.causal) return ops::conv1d_causal(x, filters, rate);
  return ops::conv1d_dilated(x, filters, rate, ops::same_padding(cfg.kernel, rate));
}

Var dilated_stack(Var e, std::span<const Var> levels, const EncoderConfig& cfg,
                  std::span<const double> valid) {
  if (levels.size() != cfg.rates.size())
    throw ArgumentError("block has " + std::to_string(levels.size()) + " levels but " +
                        std::to_string(cfg.rates.size()) + " dilation rates");
  Var h = e;
  // Padded rows are re-zeroed after every level, which makes a padded
  // sequence compute exactly what the unpadded one does.
  for (std::size_t i = 0; i < levels.size(); ++i)
    h = zero_padded_rows(conv_level(h, levels[i], cfg.rates[i], cfg), valid);
  return h;
}

Var dropout(Var x, double p, Rng* rng) {
  if (!rng || p <= 0.0) return x;
  const double keep = 1.0 - p;
  Tensor m(x.shape());
  for (double& v : m.data()) v = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return ops::mul(x, x.tape().constant(std::move(m)));
}

Var residual_block(Var e, std::span<const Var> levels, Var residual, const EncoderConfig& cfg,
                   const EncodeContext& ctx) {
  Var hm = dilated_stack(e, levels, cfg, ctx.valid);
  Var hr = zero_padded_rows(conv_level(e, residual, cfg.rates.front(), cfg), ctx.valid);
  return dropout(activate(ops::add(hm, hr), cfg.activation), cfg.dropout, ctx.rng);
}

Var encode(Var embeddings, std::span<const int> tokens, std::span<const std::vector<Var>> levels,
           std::span<const Var> residuals, const EncoderConfig& cfg, const EncodeContext& ctx) {
  if (tokens.empty()) throw InputError("cannot encode an empty token sequence");
  if (levels.size() != residuals.size() || levels.size() != static_cast<std::size_t>(cfg.num_blocks))
    throw ArgumentError("encoder expects " + std::to_string(cfg.num_blocks) + " blocks");
  Var h = dropout(ops::gather_rows(embeddings, tokens), cfg.dropout, ctx.rng);
  h = zero_padded_rows(h, ctx.valid);
  for (std::size_t b = 0; b < levels.size(); ++b)
    h = residual_block(h, levels[b], residuals[b], cfg, ctx);
  return h;
}

}  // namespace xmlc
