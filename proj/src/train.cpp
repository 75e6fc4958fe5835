#include "xmlc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iostream>
#include <numeric>

#include "xmlc/errors.hpp"
#include "xmlc/ops.hpp"

namespace xmlc {

void Adam::step(const std::vector<Parameter*>& params, double lr) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) throw ArgumentError("optimizer state does not match parameters");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (!p.trainable) continue;
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    double* w = p.value.ptr();
    const double* g = p.grad.ptr();
    double* m = m_[i].ptr();
    double* v = v_[i].ptr();
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
    }
  }
}

double clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    for (double g : p->grad.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (Parameter* p : params)
      for (double& g : p->grad.data()) g *= f;
  }
  return norm;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be at least 1");
  if (!(prediction_threshold > 0.0)) throw ConfigError("prediction_threshold must be positive");
}

std::string history_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,train_loss,val_micro_f1,lr\n";
  for (const auto& r : h)
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
           format_double(r.val_micro_f1) + "," + format_double(r.lr) + "\n";
  return out;
}

namespace {

Tensor gold_vector(const DocumentRecord& d, std::size_t L) {
  Tensor g({L});
  for (int l : d.labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= L) throw IndexError("gold label out of range", l);
    g[l] = 1.0;
  }
  return g;
}

// A bad value contaminates every gradient upstream of it, so values are
// scanned before gradients to name the source.
void check_finite(const std::vector<Parameter*>& params, std::size_t epoch, std::size_t batch) {
  auto fail = [&](const Parameter* p, const char* what) {
    throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                          std::to_string(batch) + ": parameter '" + p->name + "' has a non-finite " +
                          what);
  };
  for (const Parameter* p : params)
    if (!p->value.all_finite()) fail(p, "value");
  for (const Parameter* p : params)
    if (!p->grad.all_finite()) fail(p, "gradient");
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

}  // namespace

TrainResult train(Model& model, std::span<const DocumentRecord> train_docs,
                  std::span<const DocumentRecord> val_docs, const AuxMaskIndex& index,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_docs.empty()) throw InputError("training split is empty");
  const std::size_t L = model.config().num_labels;
  const std::size_t d = model.config().dim;
  const auto params = model.parameters();

  std::vector<DocMask> masks;
  std::vector<Tensor> golds;
  for (const auto& doc : train_docs) {
    if (doc.tokens.empty()) throw InputError("document " + doc.doc_id + " has no tokens");
    masks.push_back(model.mask_for(doc.aux, index));
    golds.push_back(gold_vector(doc, L));
  }

  std::vector<std::size_t> order(train_docs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, fnv1a("shuffle")));
  Rng dropout_rng(derive_seed(cfg.seed, fnv1a("dropout")));

  TrainResult result;
  Adam opt;
  std::vector<Tensor> best = snapshot(params);
  bool have_best = false;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (Parameter* p : params) p->zero_grad();
      Tape tape;
      const BoundModel bound = model.bind(tape);
      Var total;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t k = order[i];
        DocForward f = model.forward(tape, bound, train_docs[k].tokens, masks[k].indicator, {},
                                     &dropout_rng);
        Var l = label_loss_logits(f.logits, golds[k]);
        total = total.valid() ? ops::add(total, l) : l;
      }
      Var loss = ops::scale(total, 1.0 / static_cast<double>(end - start));
      const double lv = loss.value().item();
      tape.backward(loss);
      tape.accumulate_param_grads();
      // PAD stays a frozen zero row.
      std::fill_n(model.embedding().grad.ptr(), d, 0.0);
      if (!std::isfinite(lv)) {
        check_finite(params, epoch, batch_no);
        throw DivergenceError("training loss became non-finite at epoch " + std::to_string(epoch) +
                              ", batch " + std::to_string(batch_no));
      }
      check_finite(params, epoch, batch_no);
      clip_global_norm(params, cfg.clip_norm);
      opt.step(params, lr);
      check_finite(params, epoch, batch_no);
      loss_sum += lv * static_cast<double>(end - start);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(train_docs.size());
    if (!val_docs.empty()) {
      rec.val_micro_f1 =
          evaluate(model, val_docs, index, cfg.prediction_threshold, {}).report.micro_f1;
    }
    result.history.push_back(rec);
    if (cfg.verbose)
      std::cerr << "epoch " << epoch << " loss " << rec.train_loss << " val_micro_f1 "
                << rec.val_micro_f1 << " lr " << lr << "\n";

    if (val_docs.empty() || !have_best || rec.val_micro_f1 > result.best_val_micro_f1) {
      have_best = true;
      result.best_epoch = epoch;
      result.best_val_micro_f1 = rec.val_micro_f1;
      best = snapshot(params);
      result.optimizer = opt;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  return result;
}

Evaluation evaluate(Model& model, std::span<const DocumentRecord> docs, const AuxMaskIndex& index,
                    double threshold, std::span<const int> ks) {
  Evaluation ev;
  std::vector<std::vector<int>> tokens, gold;
  for (const auto& d : docs) {
    if (d.tokens.empty()) throw InputError("document " + d.doc_id + " has no tokens");
    tokens.push_back(d.tokens);
    gold.push_back(d.labels);
    ev.masks.push_back(model.mask_for(d.aux, index));
  }
  ev.scores = model.predict(tokens, ev.masks);
  ev.report = compute_metrics(ev.scores, gold, threshold, ks);
  return ev;
}

// ---- checkpoint container ----

namespace {

constexpr char kMagic[8] = {'X', 'M', 'L', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct Writer {
  std::string out;
  void raw(const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void tensor(const Tensor& t) {
    u64(t.rank());
    for (std::size_t d : t.shape()) u64(d);
    raw(t.ptr(), t.size() * sizeof(double));
  }
};

struct Reader {
  std::string_view in;
  std::size_t pos = 0;
  void raw(void* p, std::size_t n) {
    if (pos + n > in.size()) throw FormatError("checkpoint is truncated");
    std::memcpy(p, in.data() + pos, n);
    pos += n;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > in.size() - pos) throw FormatError("checkpoint is truncated");
    std::string s(in.substr(pos, n));
    pos += n;
    return s;
  }
  Tensor tensor() {
    const std::uint64_t rank = u64();
    if (rank > 8) throw FormatError("checkpoint tensor rank is implausible");
    Shape shape(rank);
    for (auto& d : shape) d = u64();
    Tensor t(shape);
    raw(t.ptr(), t.size() * sizeof(double));
    return t;
  }
};

}  // namespace

std::string serialize_checkpoint(Model& model, Adam& opt, const CheckpointMeta& meta) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  std::uint32_t version = kVersion;
  w.raw(&version, sizeof version);
  w.str(meta.config_hash);
  w.u64(meta.vocab_hash);
  w.u64(meta.epoch);
  w.str(model.config().serialize());
  const auto params = model.parameters();
  w.u64(params.size());
  for (const Parameter* p : params) {
    w.str(p->name);
    w.tensor(p->value);
  }
  w.u64(opt.steps());
  const bool has_state = !opt.first_moments().empty();
  w.u64(has_state ? params.size() : 0);
  if (has_state)
    for (std::size_t i = 0; i < params.size(); ++i) {
      w.tensor(opt.first_moments()[i]);
      w.tensor(opt.second_moments()[i]);
    }
  return w.out;
}

LoadedCheckpoint parse_checkpoint(std::string_view bytes) {
  Reader r{bytes};
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw FormatError("not a checkpoint file");
  std::uint32_t version = 0;
  r.raw(&version, sizeof version);
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  LoadedCheckpoint c;
  c.meta.config_hash = r.str();
  c.meta.vocab_hash = r.u64();
  c.meta.epoch = r.u64();
  c.model_config = ModelConfig::parse(r.str());
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    c.params.emplace_back(std::move(name), r.tensor());
  }
  c.optimizer.set_steps(r.u64());
  const std::uint64_t k = r.u64();
  for (std::uint64_t i = 0; i < k; ++i) {
    c.optimizer.first_moments().push_back(r.tensor());
    c.optimizer.second_moments().push_back(r.tensor());
  }
  if (r.pos != bytes.size()) throw FormatError("trailing bytes after checkpoint");
  return c;
}

void restore_parameters(Model& model, const std::vector<Parameter>& params) {
  for (Parameter* p : model.parameters()) {
    const auto it = std::find_if(params.begin(), params.end(),
                                 [&](const Parameter& q) { return q.name == p->name; });
    if (it == params.end()) throw FormatError("checkpoint lacks parameter '" + p->name + "'");
    if (it->value.shape() != p->value.shape())
      throw FormatError("checkpoint parameter '" + p->name + "' has shape " +
                        to_string(it->value.shape()) + ", model expects " +
                        to_string(p->value.shape()));
    p->value = it->value;
  }
}

}  // namespace xmlc
