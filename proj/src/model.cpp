#include "xmlc/model.hpp"

#include <cmath>
#include <map>

#include "xmlc/errors.hpp"
#include "xmlc/ops.hpp"

namespace xmlc {

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::Full;
  if (name == "no_label_feature") return Variant::NoLabelFeature;
  if (name == "no_mask") return Variant::NoMask;
  if (name == "swap_embeddings") return Variant::SwapEmbeddings;
  throw ArgumentError("unknown variant '" + std::string(name) +
                      "' (expected full, no_label_feature, no_mask or swap_embeddings)");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::NoLabelFeature: return "no_label_feature";
    case Variant::NoMask: return "no_mask";
    case Variant::SwapEmbeddings: return "swap_embeddings";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ConfigError("vocabulary must hold at least the two special tokens");
  if (num_labels == 0) throw ConfigError("label set is empty");
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  encoder.validate();
}

std::string ModelConfig::serialize() const {
  std::string rates;
  for (std::size_t i = 0; i < encoder.rates.size(); ++i)
    rates += (i ? "," : "") + std::to_string(encoder.rates[i]);
  std::string out;
  out += "vocab_size=" + std::to_string(vocab_size) + "\n";
  out += "num_labels=" + std::to_string(num_labels) + "\n";
  out += "dim=" + std::to_string(dim) + "\n";
  out += "kernel=" + std::to_string(encoder.kernel) + "\n";
  out += "rates=" + rates + "\n";
  out += "num_blocks=" + std::to_string(encoder.num_blocks) + "\n";
  out += "dropout=" + format_double(encoder.dropout) + "\n";
  out += std::string("activation=") + to_string(encoder.activation) + "\n";
  out += std::string("causal=") + (encoder.causal ? "true" : "false") + "\n";
  out += std::string("norm=") + to_string(norm) + "\n";
  out += std::string("variant=") + to_string(variant) + "\n";
  out += std::string("hard_gate=") + (hard_gate ? "true" : "false") + "\n";
  out += "seed=" + std::to_string(seed) + "\n";
  return out;
}

ModelConfig ModelConfig::parse(std::string_view text) {
  std::map<std::string, std::string> kv;
  for (const auto& line : split(text, '\n')) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("model config line without '=': " + line);
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(std::string("model config lacks ") + key);
    return it->second;
  };
  ModelConfig c;
  try {
    c.vocab_size = std::stoull(get("vocab_size"));
    c.num_labels = std::stoull(get("num_labels"));
    c.dim = std::stoull(get("dim"));
    c.encoder.kernel = std::stoi(get("kernel"));
    c.encoder.rates.clear();
    for (const auto& r : split(get("rates"), ',')) c.encoder.rates.push_back(std::stoi(r));
    c.encoder.num_blocks = std::stoi(get("num_blocks"));
    c.encoder.dropout = std::stod(get("dropout"));
    c.seed = std::stoull(get("seed"));
  } catch (const std::invalid_argument&) {
    throw FormatError("non-numeric value in model config");
  }
  c.encoder.activation = parse_activation(get("activation"));
  c.encoder.causal = get("causal") == "true";
  c.norm = parse_norm_mode(get("norm"));
  c.variant = parse_variant(get("variant"));
  c.hard_gate = get("hard_gate") == "true";
  return c;
}

namespace {

Parameter xavier(const std::string& name, std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t({rows, cols});
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return Parameter(name, std::move(t));
}

}  // namespace

Model::Model(ModelConfig cfg, Tensor propagation, std::vector<std::vector<int>> descriptors,
             Tensor embedding_init)
    : cfg_(std::move(cfg)), propagation_(std::move(propagation)), descriptors_(std::move(descriptors)) {
  cfg_.validate();
  const std::size_t V = cfg_.vocab_size, L = cfg_.num_labels, d = cfg_.dim;
  if (embedding_init.shape() != Shape{V, d})
    throw DimensionError("embedding init " + to_string(embedding_init.shape()) + " but model needs " +
                         to_string(Shape{V, d}));
  if (propagation_.shape() != Shape{L, L})
    throw DimensionError("propagation matrix " + to_string(propagation_.shape()) + " for " +
                         std::to_string(L) + " labels");
  if (descriptors_.size() != L)
    throw DimensionError("descriptor list has " + std::to_string(descriptors_.size()) +
                         " entries for " + std::to_string(L) + " labels");
  for (const auto& ids : descriptors_)
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= V)
        throw IndexError("descriptor token id out of vocabulary", id);

  std::fill_n(embedding_init.ptr(), d, 0.0);
  embedding_ = Parameter("embedding", std::move(embedding_init));
  Rng rng(derive_seed(cfg_.seed, 0x6d6f64656c));
  for (int b = 0; b < cfg_.encoder.num_blocks; ++b)
    blocks_.push_back(init_block(d, cfg_.encoder, rng, "block" + std::to_string(b)));
  if (cfg_.variant == Variant::NoLabelFeature) {
    Tensor u({L, d});
    for (double& v : u.data()) v = rng.uniform(-0.5, 0.5) / static_cast<double>(d);
    label_u_ = Parameter("label.u", std::move(u));
    label_fc_ = xavier("label.fc", d, d, rng);
  } else {
    gcn_w1_ = xavier("gcn.w1", d, d, rng);
    gcn_w2_ = xavier("gcn.w2", d, d, rng);
  }
  cls_w_ = xavier("classifier.w", d, 1, rng);
  cls_b_ = Parameter("classifier.b", Tensor({L}));
}

void Model::set_label_prior(std::span<const double> rates) {
  if (rates.size() != cfg_.num_labels)
    throw DimensionError("label prior has " + std::to_string(rates.size()) + " rates for " +
                         std::to_string(cfg_.num_labels) + " labels");
  auto b = cls_b_.value.data();
  for (std::size_t l = 0; l < rates.size(); ++l) {
    if (!(rates[l] > 0.0 && rates[l] < 1.0)) throw ArgumentError("label rates must lie in (0, 1)");
    b[l] = std::log(rates[l] / (1.0 - rates[l]));
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out{&embedding_};
  for (auto& b : blocks_) {
    for (auto& l : b.levels) out.push_back(&l);
    out.push_back(&b.residual);
  }
  if (cfg_.variant == Variant::NoLabelFeature) {
    out.push_back(&label_u_);
    out.push_back(&label_fc_);
  } else {
    out.push_back(&gcn_w1_);
    out.push_back(&gcn_w2_);
  }
  out.push_back(&cls_w_);
  out.push_back(&cls_b_);
  return out;
}

Parameter* Model::find(const std::string& name) {
  for (Parameter* p : parameters())
    if (p->name == name) return p;
  return nullptr;
}

BoundModel Model::bind(Tape& tape) {
  BoundModel m;
  m.embedding = tape.param(embedding_);
  for (auto& b : blocks_) {
    std::vector<Var> lv;
    for (auto& l : b.levels) lv.push_back(tape.param(l));
    m.levels.push_back(std::move(lv));
    m.residuals.push_back(tape.param(b.residual));
  }
  if (cfg_.variant == Variant::NoLabelFeature) {
    m.h_label = ops::matmul(tape.param(label_u_), tape.param(label_fc_));
  } else {
    Var v = label_features(m.embedding, descriptors_);
    m.h_label = gcn_forward(propagation_, v, tape.param(gcn_w1_), tape.param(gcn_w2_));
  }
  m.w = tape.param(cls_w_);
  m.b = tape.param(cls_b_);
  return m;
}

DocForward Model::forward(Tape& tape, const BoundModel& m, std::span<const int> tokens,
                          std::span<const double> indicator, std::span<const double> valid,
                          Rng* rng) const {
  (void)tape;
  EncodeContext ctx{valid, rng};
  Var d = encode(m.embedding, tokens, m.levels, m.residuals, cfg_.encoder, ctx);
  Var h = apply_mask(m.h_label, indicator);
  DocForward out;
  out.attention = label_attention(d, h, valid);
  out.logits = classifier_logits(out.attention.context, m.w, m.b);
  out.probs = ops::sigmoid(out.logits);
  return out;
}

DocMask Model::mask_for(const AuxCodes& aux, const AuxMaskIndex& index) const {
  if (cfg_.variant == Variant::NoMask) return full_mask(cfg_.num_labels);
  return make_doc_mask(aux, index);
}

void Model::gate(std::vector<double>& probs, const DocMask& mask) const {
  if (!cfg_.hard_gate || mask.empty()) return;
  for (std::size_t k = 0; k < probs.size(); ++k)
    if (mask.indicator[k] == 0.0) probs[k] = 0.0;
}

std::vector<std::vector<double>> Model::predict(std::span<const std::vector<int>> tokens,
                                                std::span<const DocMask> masks) {
  if (tokens.size() != masks.size()) throw ArgumentError("one mask per document required");
  Tape tape(false);
  const BoundModel m = bind(tape);
  std::vector<std::vector<double>> out;
  out.reserve(tokens.size());
  const std::size_t mark = tape.size();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    DocForward f = forward(tape, m, tokens[i], masks[i].indicator);
    const auto probs = f.probs.value().data();
    std::vector<double> p(probs.begin(), probs.end());
    gate(p, masks[i]);
    out.push_back(std::move(p));
    tape.rewind(mark);
  }
  return out;
}

}  // namespace xmlc
