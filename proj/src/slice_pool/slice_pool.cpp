#include "slicevlp/slice_pool/slice_pool.hpp"

#include <cmath>

#include "slicevlp/error.hpp"

namespace slicevlp::pool {

namespace {

constexpr double kInitStd = 0.02;

Tensor gaussian(diff::Shape shape, diff::Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal(0.0, kInitStd);
  return t;
}

void check_stack_size(std::size_t n, std::size_t max_slices) {
  if (n == 0) throw InputError("slice pooling needs at least one slice");
  if (n > max_slices) {
    throw CapacityError("volume has " + std::to_string(n) +
                        " slices but the adapter holds at most S_max = " +
                        std::to_string(max_slices));
  }
}

template <typename Params>
AdapterVars bind_impl(Params& p, auto&& leaf) {
  AdapterVars v;
  v.pe_table = leaf(p.pe_table);
  for (std::size_t h = 0; h < p.heads; ++h) {
    v.wq.push_back(leaf(p.wq[h]));
    v.wk.push_back(leaf(p.wk[h]));
    v.wv.push_back(leaf(p.wv[h]));
  }
  v.wo = leaf(p.wo);
  v.d_head = p.d_head;
  v.max_slices = p.max_slices();
  v.dropout_rate = p.dropout_rate;
  return v;
}

}  // namespace

PoolMode parse_pool_mode(const std::string& text) {
  if (text == "attn" || text == "attention") return PoolMode::kAttention;
  if (text == "gap") return PoolMode::kGap;
  throw ConfigError("unknown pool mode '" + text + "' (expected gap or attn)");
}

const char* to_string(PoolMode mode) noexcept {
  return mode == PoolMode::kGap ? "gap" : "attn";
}

std::vector<Param*> AdapterParams::params() {
  std::vector<Param*> out{&pe_table};
  for (std::size_t h = 0; h < heads; ++h) {
    out.push_back(&wq[h]);
    out.push_back(&wk[h]);
    out.push_back(&wv[h]);
  }
  out.push_back(&wo);
  return out;
}

std::vector<const Param*> AdapterParams::params() const {
  std::vector<const Param*> out;
  for (Param* p : const_cast<AdapterParams*>(this)->params()) out.push_back(p);
  return out;
}

void AdapterParams::set_trainable(bool on) {
  for (Param* p : params()) p->trainable = on;
}

AdapterParams init_adapter(const AdapterConfig& cfg, std::uint64_t seed) {
  if (cfg.heads == 0 || cfg.d_model == 0 || cfg.d_model % cfg.heads != 0) {
    throw ConfigError("adapter needs heads * d_head == d_model; heads=" +
                      std::to_string(cfg.heads) + " d_model=" + std::to_string(cfg.d_model));
  }
  if (cfg.max_slices == 0) throw ConfigError("adapter S_max must be positive");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
    throw ConfigError("adapter dropout rate must be in [0, 1)");
  }
  diff::Rng rng(diff::derive_seed(seed, "init.adapter"));
  AdapterParams p;
  p.heads = cfg.heads;
  p.d_head = cfg.d_model / cfg.heads;
  p.dropout_rate = cfg.dropout_rate;
  p.pe_table = Param("adapter.pe_table", gaussian({cfg.max_slices, cfg.d_model}, rng));
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::string suffix = std::to_string(h);
    p.wq.emplace_back("adapter.wq." + suffix, gaussian({cfg.d_model, p.d_head}, rng));
    p.wk.emplace_back("adapter.wk." + suffix, gaussian({cfg.d_model, p.d_head}, rng));
    p.wv.emplace_back("adapter.wv." + suffix, gaussian({cfg.d_model, p.d_head}, rng));
  }
  p.wo = Param("adapter.wo", gaussian({cfg.heads * p.d_head, cfg.d_model}, rng));
  return p;
}

AdapterVars bind(Tape& tape, AdapterParams& params) {
  return bind_impl(params, [&tape](Param& p) { return tape.param(p); });
}

AdapterVars bind(Tape& tape, const AdapterParams& params) {
  return bind_impl(params,
                   [&tape](const Param& p) { return tape.constant_ref(p.value); });
}

Var attention_pool(const AdapterVars& adapter, Var stack, bool train_mode, diff::Rng* rng,
                   AttentionMaps* maps) {
  const Tensor& s = stack.value();
  if (s.rank() != 2) throw InputError("slice stack must be n x d, got " + diff::shape_str(s.shape()));
  check_stack_size(s.rows(), adapter.max_slices);
  const std::size_t n = s.rows();

  Var z = diff::add(stack, diff::slice_rows(adapter.pe_table, 0, n));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(adapter.d_head));
  std::vector<Var> heads;
  heads.reserve(adapter.wq.size());
  for (std::size_t h = 0; h < adapter.wq.size(); ++h) {
    Var q = diff::matmul(z, adapter.wq[h]);
    Var k = diff::matmul(z, adapter.wk[h]);
    Var v = diff::matmul(z, adapter.wv[h]);
    Var attn = diff::softmax_rows(diff::scale(diff::matmul(q, diff::transpose(k)), inv_sqrt));
    if (maps) maps->push_back(attn.value());
    heads.push_back(diff::matmul(attn, v));
  }
  Var out = diff::matmul(diff::concat_cols(heads), adapter.wo);
  if (train_mode && adapter.dropout_rate > 0.0) {
    if (!rng) throw ContractError("train-mode adapter dropout needs a generator");
    out = diff::dropout(out, adapter.dropout_rate, true, *rng);
  }
  return diff::mean_row_groups(out, n);
}

Embedding attention_pool(const SliceStack& stack, const AdapterParams& params, AttentionMaps* maps) {
  Tape tape;
  Var out = attention_pool(bind(tape, params), tape.constant_ref(stack.mat), false, nullptr, maps);
  return Embedding{out.value().reshaped({params.d_model()})};
}

Embedding gap_pool(const SliceStack& stack) {
  if (stack.mat.rank() != 2 || stack.n() == 0) {
    throw InputError("gap_pool needs at least one slice");
  }
  return Embedding{diff::mean_rows(stack.mat)};
}

Var gap_pool(Var stack) {
  if (stack.value().rank() != 2 || stack.value().rows() == 0) {
    throw InputError("gap_pool needs at least one slice");
  }
  return diff::mean_row_groups(stack, stack.value().rows());
}

Embedding pool_stack(const SliceStack& stack, const AdapterParams& params, PoolMode mode) {
  return mode == PoolMode::kGap ? gap_pool(stack) : attention_pool(stack, params);
}

}  // namespace slicevlp::pool
