#include "sptok/lm/model.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "sptok/error.hpp"
#include "sptok/numerics/loss.hpp"
#include "sptok/numerics/rng.hpp"
#include "sptok/simd/kernels.hpp"

namespace sptok::lm {

const LoraAdapter* AdapterSet::find(const std::string& target) const {
  for (const auto& a : adapters) {
    if (a.target == target) return &a;
  }
  return nullptr;
}

namespace {

template <typename T>
using Vec = std::vector<T>;

std::string block_param(std::size_t i, const std::string& suffix) { return "block" + std::to_string(i) + "." + suffix; }

template <typename T>
BasicTensor<T>* grad_slot(GradMap<T>* grads, const std::string& name) {
  if (grads == nullptr) return nullptr;
  auto it = grads->find(name);
  return it == grads->end() ? nullptr : &it->second;
}

template <typename T>
T* raw_or_null(BasicTensor<T>* t) {
  return t == nullptr ? nullptr : t->raw();
}

// y = x W + b, plus scale * (x A^T) B^T when an adapter is bound.
template <typename T>
struct Linear {
  const T* w = nullptr;
  const T* b = nullptr;
  const T* a = nullptr;
  const T* bb = nullptr;
  T scale = 0;
  std::size_t din = 0, dout = 0, rank = 0;
  T* gw = nullptr;
  T* gb = nullptr;
  T* ga = nullptr;
  T* gbb = nullptr;

  void forward(const T* x, std::size_t n, T* y, Vec<T>& h) const {
    for (std::size_t i = 0; i < n; ++i) std::copy_n(b, dout, y + i * dout);
    simd::gemm_nn(n, din, dout, x, w, y);
    if (a != nullptr) {
      h.assign(n * rank, T(0));
      simd::gemm_nt(n, din, rank, x, a, h.data());
      Vec<T> delta(n * dout, T(0));
      simd::gemm_nt(n, rank, dout, h.data(), bb, delta.data());
      simd::axpy(scale, delta.data(), y, n * dout);
    }
  }

  // Accumulates into dx (when non-null) and into bound gradient slots.
  void backward(const T* x, const Vec<T>& h, const T* dy, std::size_t n, T* dx) const {
    if (dx != nullptr) simd::gemm_nt(n, dout, din, dy, w, dx);
    if (gw != nullptr) simd::gemm_tn(n, din, dout, x, dy, gw);
    if (gb != nullptr) {
      for (std::size_t i = 0; i < n; ++i) simd::axpy(T(1), dy + i * dout, gb, dout);
    }
    if (a == nullptr) return;
    Vec<T> dh(n * rank, T(0));
    simd::gemm_nn(n, dout, rank, dy, bb, dh.data());
    for (T& v : dh) v *= scale;
    if (gbb != nullptr) {
      Vec<T> t(dout * rank, T(0));
      simd::gemm_tn(n, dout, rank, dy, h.data(), t.data());
      simd::axpy(scale, t.data(), gbb, dout * rank);
    }
    if (ga != nullptr) simd::gemm_tn(n, rank, din, dh.data(), x, ga);
    if (dx != nullptr) simd::gemm_nn(n, rank, din, dh.data(), a, dx);
  }
};

template <typename T>
struct Norm {
  const T* g = nullptr;
  const T* b = nullptr;
  T* gg = nullptr;
  T* gb = nullptr;
  std::size_t d = 0;
  T eps = T(1e-5);

  void forward(const T* x, std::size_t n, T* y, Vec<T>& xhat, Vec<T>& rstd) const {
    xhat.resize(n * d);
    rstd.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const T* xi = x + i * d;
      T mean = 0;
      for (std::size_t j = 0; j < d; ++j) mean += xi[j];
      mean /= static_cast<T>(d);
      T var = 0;
      for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
      var /= static_cast<T>(d);
      const T r = T(1) / std::sqrt(var + eps);
      rstd[i] = r;
      for (std::size_t j = 0; j < d; ++j) {
        const T xh = (xi[j] - mean) * r;
        xhat[i * d + j] = xh;
        y[i * d + j] = xh * g[j] + b[j];
      }
    }
  }

  void backward(const Vec<T>& xhat, const Vec<T>& rstd, const T* dy, std::size_t n, T* dx) const {
    Vec<T> dxh(d);
    for (std::size_t i = 0; i < n; ++i) {
      const T* dyi = dy + i * d;
      const T* xh = xhat.data() + i * d;
      T m1 = 0, m2 = 0;
      for (std::size_t j = 0; j < d; ++j) {
        dxh[j] = dyi[j] * g[j];
        m1 += dxh[j];
        m2 += dxh[j] * xh[j];
        if (gg != nullptr) gg[j] += dyi[j] * xh[j];
        if (gb != nullptr) gb[j] += dyi[j];
      }
      m1 /= static_cast<T>(d);
      m2 /= static_cast<T>(d);
      for (std::size_t j = 0; j < d; ++j) dx[i * d + j] += rstd[i] * (dxh[j] - m1 - xh[j] * m2);
    }
  }
};

// tanh term of the GELU approximation; cached so backward does not recompute it.
template <typename T>
T gelu_tanh(T u) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  return std::tanh(c * (u + T(0.044715) * u * u * u));
}

template <typename T>
T gelu(T u, T t) {
  return T(0.5) * u * (T(1) + t);
}

template <typename T>
T gelu_grad(T u, T t) {
  const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  return T(0.5) * (T(1) + t) + T(0.5) * u * (T(1) - t * t) * c * (T(1) + T(3) * T(0.044715) * u * u);
}

enum LinearSlot { kQ, kK, kV, kO, kUp, kDown, kLinearCount };

template <typename T>
struct BlockCache {
  Vec<T> x_in, xhat1, rstd1, a, q, k, v, probs, att, x_mid, xhat2, rstd2, m, u, tanh_u, act;
  std::array<Vec<T>, kLinearCount> lora_h;
};

template <typename T>
struct Trace {
  std::size_t n = 0;
  std::vector<BlockCache<T>> blocks;
  Vec<T> x_final, xhatf, rstdf, hf;
};

template <typename T>
struct Table {
  const BasicTensor<T>* value = nullptr;
  T* grad = nullptr;
  std::size_t rows() const { return value == nullptr ? 0 : value->rows(); }
};

template <typename T>
class Model {
 public:
  Model(const BasicParamStore<T>& p, const LmConfig& cfg, const AdapterSet& adapters, GradMap<T>* grads)
      : p_(p), cfg_(cfg), d_(cfg.d_model) {
    cfg.validate();
    auto table = [&](const std::string& name) {
      Table<T> t;
      if (p.contains(name)) {
        t.value = &p.get(name);
        t.grad = raw_or_null(grad_slot(grads, name));
      }
      return t;
    };
    text_ = table("embed.text");
    audio_ = table("embed.audio");
    special_ = table("embed.special");
    pos_ = table("embed.pos");
    require(text_.rows() == cfg.text_vocab, ErrorCode::kShapeMismatch, "embed.text rows != text_vocab");
    require(audio_.rows() == cfg.audio_vocab, ErrorCode::kShapeMismatch, "embed.audio rows != audio_vocab");
    require(special_.rows() == 3 && pos_.rows() == cfg.context, ErrorCode::kShapeMismatch, "special/pos tables");

    auto norm = [&](const std::string& prefix) {
      Norm<T> nm;
      nm.g = p.get(prefix + ".g").raw();
      nm.b = p.get(prefix + ".b").raw();
      nm.gg = raw_or_null(grad_slot(grads, prefix + ".g"));
      nm.gb = raw_or_null(grad_slot(grads, prefix + ".b"));
      nm.d = d_;
      nm.eps = static_cast<T>(cfg.ln_eps);
      return nm;
    };
    auto linear = [&](const std::string& wname, const std::string& bname) {
      Linear<T> l;
      const auto& w = p.get(wname);
      l.w = w.raw();
      l.din = w.shape()[0];
      l.dout = w.shape()[1];
      l.b = p.get(bname).raw();
      l.gw = raw_or_null(grad_slot(grads, wname));
      l.gb = raw_or_null(grad_slot(grads, bname));
      if (const LoraAdapter* ad = adapters.find(wname)) {
        const auto& a = p.get(ad->a_name());
        const auto& b = p.get(ad->b_name());
        require(a.shape() == std::vector<std::size_t>{ad->rank, l.din} &&
                    b.shape() == std::vector<std::size_t>{l.dout, ad->rank},
                ErrorCode::kShapeMismatch, "adapter shapes for " + wname);
        l.a = a.raw();
        l.bb = b.raw();
        l.rank = ad->rank;
        l.scale = static_cast<T>(ad->scale());
        l.ga = raw_or_null(grad_slot(grads, ad->a_name()));
        l.gbb = raw_or_null(grad_slot(grads, ad->b_name()));
      }
      return l;
    };
    for (const auto& ad : adapters.adapters) {
      require(p.contains(ad.target) && p.contains(ad.a_name()) && p.contains(ad.b_name()), ErrorCode::kUnknownTarget,
              "adapter target " + ad.target + " is not bound");
    }
    for (std::size_t i = 0; i < cfg.n_layers; ++i) {
      Block b;
      b.ln1 = norm(block_param(i, "ln1"));
      b.ln2 = norm(block_param(i, "ln2"));
      const char* names[kLinearCount][2] = {{"attn.wq", "attn.bq"}, {"attn.wk", "attn.bk"}, {"attn.wv", "attn.bv"},
                                            {"attn.wo", "attn.bo"}, {"mlp.w1", "mlp.b1"},   {"mlp.w2", "mlp.b2"}};
      for (int s = 0; s < kLinearCount; ++s) b.lin[s] = linear(block_param(i, names[s][0]), block_param(i, names[s][1]));
      blocks_.push_back(b);
    }
    final_ = norm("final");
    if (p.contains("proj.weight")) {
      proj_ = linear("proj.weight", "proj.bias");
      has_proj_ = true;
    }
  }

  Trace<T> run(const FusedSequence& seq) const {
    const std::size_t n = seq.size();
    require(n > 0, ErrorCode::kInvalidArgument, "empty sequence");
    require(n <= cfg_.context, ErrorCode::kContextOverflow,
            "sequence length " + std::to_string(n) + " exceeds context " + std::to_string(cfg_.context));
    require(seq.kinds.size() == n, ErrorCode::kShapeMismatch, "ids and kinds differ in length");
    Trace<T> tr;
    tr.n = n;
    Vec<T> x(n * d_);
    for (std::size_t p = 0; p < n; ++p) {
      T* xp = x.data() + p * d_;
      if (seq.kinds[p] == PositionKind::kSoft) {
        require(has_proj_, ErrorCode::kMissingPrerequisite, "soft token without a projection");
        require(seq.soft.size() == proj_.din, ErrorCode::kDimensionMismatch, "soft vector dimension");
        const Vec<T> v(seq.soft.begin(), seq.soft.end());
        Vec<T> h;
        proj_.forward(v.data(), 1, xp, h);
      } else {
        const auto [tab, row] = lookup(seq.ids[p]);
        std::copy_n(tab->value->raw() + row * d_, d_, xp);
      }
      simd::axpy(T(1), pos_.value->raw() + p * d_, xp, d_);
    }

    const std::size_t H = cfg_.n_heads, dh = cfg_.head_dim(), f = cfg_.mlp_dim();
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    tr.blocks.resize(blocks_.size());
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const Block& b = blocks_[l];
      BlockCache<T>& c = tr.blocks[l];
      c.x_in = x;
      c.a.resize(n * d_);
      b.ln1.forward(x.data(), n, c.a.data(), c.xhat1, c.rstd1);
      c.q.resize(n * d_);
      c.k.resize(n * d_);
      c.v.resize(n * d_);
      b.lin[kQ].forward(c.a.data(), n, c.q.data(), c.lora_h[kQ]);
      b.lin[kK].forward(c.a.data(), n, c.k.data(), c.lora_h[kK]);
      b.lin[kV].forward(c.a.data(), n, c.v.data(), c.lora_h[kV]);

      const auto& K = simd::kernels<T>();
      c.probs.assign(H * n * n, T(0));
      c.att.assign(n * d_, T(0));
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
          T* pr = c.probs.data() + (h * n + i) * n;
          const T* qi = c.q.data() + i * d_ + h * dh;
          for (std::size_t j = 0; j <= i; ++j) pr[j] = K.dot(qi, c.k.data() + j * d_ + h * dh, dh) * inv_sqrt;
          softmax_inplace(std::span<T>(pr, i + 1));
          T* out = c.att.data() + i * d_ + h * dh;
          for (std::size_t j = 0; j <= i; ++j) K.axpy(pr[j], c.v.data() + j * d_ + h * dh, out, dh);
        }
      }
      c.x_mid = x;
      {
        Vec<T> o(n * d_);
        b.lin[kO].forward(c.att.data(), n, o.data(), c.lora_h[kO]);
        simd::axpy(T(1), o.data(), c.x_mid.data(), n * d_);
      }
      c.m.resize(n * d_);
      b.ln2.forward(c.x_mid.data(), n, c.m.data(), c.xhat2, c.rstd2);
      c.u.resize(n * f);
      b.lin[kUp].forward(c.m.data(), n, c.u.data(), c.lora_h[kUp]);
      c.act.resize(n * f);
      c.tanh_u.resize(n * f);
      for (std::size_t i = 0; i < n * f; ++i) {
        c.tanh_u[i] = gelu_tanh(c.u[i]);
        c.act[i] = gelu(c.u[i], c.tanh_u[i]);
      }
      x = c.x_mid;
      Vec<T> o(n * d_);
      b.lin[kDown].forward(c.act.data(), n, o.data(), c.lora_h[kDown]);
      simd::axpy(T(1), o.data(), x.data(), n * d_);
    }
    tr.x_final = x;
    tr.hf.resize(n * d_);
    final_.forward(x.data(), n, tr.hf.data(), tr.xhatf, tr.rstdf);
    return tr;
  }

  // Logits for the listed rows: [text | audio | special] columns.
  BasicTensor<T> logits(const Trace<T>& tr, std::span<const std::size_t> rows) const {
    const std::size_t r = rows.size();
    const std::size_t v = cfg_.vocab_size();
    BasicTensor<T> out({std::max<std::size_t>(r, 1), v});
    Vec<T> h(r * d_);
    for (std::size_t i = 0; i < r; ++i) std::copy_n(tr.hf.data() + rows[i] * d_, d_, h.data() + i * d_);
    std::size_t col = 0;
    for (const Table<T>* t : {&text_, &audio_, &special_}) {
      const std::size_t vt = t->rows();
      if (vt == 0) continue;
      Vec<T> part(r * vt, T(0));
      simd::gemm_nt(r, d_, vt, h.data(), t->value->raw(), part.data());
      for (std::size_t i = 0; i < r; ++i) std::copy_n(part.data() + i * vt, vt, out.raw() + i * v + col);
      col += vt;
    }
    return out;
  }

  // Tied-embedding backward: accumulates table grads and d hidden rows.
  void logits_backward(const Trace<T>& tr, std::span<const std::size_t> rows, const BasicTensor<T>& dlogits,
                       Vec<T>& dhf) const {
    const std::size_t r = rows.size();
    const std::size_t v = cfg_.vocab_size();
    Vec<T> h(r * d_), dh(r * d_, T(0));
    for (std::size_t i = 0; i < r; ++i) std::copy_n(tr.hf.data() + rows[i] * d_, d_, h.data() + i * d_);
    std::size_t col = 0;
    for (const Table<T>* t : {&text_, &audio_, &special_}) {
      const std::size_t vt = t->rows();
      if (vt == 0) continue;
      Vec<T> part(r * vt);
      for (std::size_t i = 0; i < r; ++i) std::copy_n(dlogits.raw() + i * v + col, vt, part.data() + i * vt);
      simd::gemm_nn(r, vt, d_, part.data(), t->value->raw(), dh.data());
      if (t->grad != nullptr) simd::gemm_tn(r, vt, d_, part.data(), h.data(), t->grad);
      col += vt;
    }
    for (std::size_t i = 0; i < r; ++i) simd::axpy(T(1), dh.data() + i * d_, dhf.data() + rows[i] * d_, d_);
  }

  // Backpropagates d(final hidden) through the network.
  void backward(const FusedSequence& seq, const Trace<T>& tr, const Vec<T>& dhf) const {
    const std::size_t n = tr.n;
    const std::size_t H = cfg_.n_heads, dh = cfg_.head_dim(), f = cfg_.mlp_dim();
    const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
    Vec<T> dx(n * d_, T(0));
    final_.backward(tr.xhatf, tr.rstdf, dhf.data(), n, dx.data());

    for (std::size_t l = blocks_.size(); l-- > 0;) {
      const Block& b = blocks_[l];
      const BlockCache<T>& c = tr.blocks[l];
      // MLP branch; dx is the gradient w.r.t. the block output.
      Vec<T> dact(n * f, T(0));
      b.lin[kDown].backward(c.act.data(), c.lora_h[kDown], dx.data(), n, dact.data());
      for (std::size_t i = 0; i < n * f; ++i) dact[i] *= gelu_grad(c.u[i], c.tanh_u[i]);
      Vec<T> dm(n * d_, T(0));
      b.lin[kUp].backward(c.m.data(), c.lora_h[kUp], dact.data(), n, dm.data());
      Vec<T> dmid = dx;
      b.ln2.backward(c.xhat2, c.rstd2, dm.data(), n, dmid.data());

      // Attention branch.
      Vec<T> datt(n * d_, T(0));
      b.lin[kO].backward(c.att.data(), c.lora_h[kO], dmid.data(), n, datt.data());
      Vec<T> dq(n * d_, T(0)), dk(n * d_, T(0)), dv(n * d_, T(0));
      Vec<T> dp(n);
      const auto& K = simd::kernels<T>();
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
          const T* pr = c.probs.data() + (h * n + i) * n;
          const T* dai = datt.data() + i * d_ + h * dh;
          T s = 0;
          for (std::size_t j = 0; j <= i; ++j) {
            dp[j] = K.dot(dai, c.v.data() + j * d_ + h * dh, dh);
            s += pr[j] * dp[j];
          }
          const T* qi = c.q.data() + i * d_ + h * dh;
          T* dqi = dq.data() + i * d_ + h * dh;
          for (std::size_t j = 0; j <= i; ++j) {
            const T ds = pr[j] * (dp[j] - s) * inv_sqrt;
            K.axpy(ds, c.k.data() + j * d_ + h * dh, dqi, dh);
            K.axpy(ds, qi, dk.data() + j * d_ + h * dh, dh);
            K.axpy(pr[j], dai, dv.data() + j * d_ + h * dh, dh);
          }
        }
      }
      Vec<T> da(n * d_, T(0));
      b.lin[kQ].backward(c.a.data(), c.lora_h[kQ], dq.data(), n, da.data());
      b.lin[kK].backward(c.a.data(), c.lora_h[kK], dk.data(), n, da.data());
      b.lin[kV].backward(c.a.data(), c.lora_h[kV], dv.data(), n, da.data());
      dx = dmid;
      b.ln1.backward(c.xhat1, c.rstd1, da.data(), n, dx.data());
    }

    for (std::size_t p = 0; p < n; ++p) {
      const T* g = dx.data() + p * d_;
      if (pos_.grad != nullptr) simd::axpy(T(1), g, pos_.grad + p * d_, d_);
      if (seq.kinds[p] == PositionKind::kSoft) {
        const Vec<T> v(seq.soft.begin(), seq.soft.end());
        proj_.backward(v.data(), {}, g, 1, nullptr);
        continue;
      }
      const auto [tab, row] = lookup(seq.ids[p]);
      if (tab->grad != nullptr) simd::axpy(T(1), g, tab->grad + row * d_, d_);
    }
  }

  std::size_t d() const { return d_; }

 private:
  struct Block {
    Norm<T> ln1, ln2;
    std::array<Linear<T>, kLinearCount> lin;
  };

  std::pair<const Table<T>*, std::size_t> lookup(std::int32_t id) const {
    require(id >= 0 && static_cast<std::size_t>(id) < cfg_.vocab_size(), ErrorCode::kIndexOutOfRange,
            "token id " + std::to_string(id) + " outside the vocabulary");
    auto u = static_cast<std::size_t>(id);
    if (u < cfg_.text_vocab) return {&text_, u};
    u -= cfg_.text_vocab;
    if (u < cfg_.audio_vocab) return {&audio_, u};
    return {&special_, u - cfg_.audio_vocab};
  }

  const BasicParamStore<T>& p_;
  const LmConfig& cfg_;
  std::size_t d_;
  Table<T> text_, audio_, special_, pos_;
  std::vector<Block> blocks_;
  Norm<T> final_;
  Linear<T> proj_;
  bool has_proj_ = false;
};

template <typename T>
BasicTensor<T> normal_tensor(std::vector<std::size_t> shape, std::uint64_t seed, const std::string& name, double std) {
  BasicTensor<T> t(std::move(shape));
  Rng rng(derive_seed(seed, name));
  fill_normal(t, rng, std);
  return t;
}

struct HeadLogits {
  std::vector<double> probs;
};

}  // namespace

template <typename T>
BasicParamStore<T> init_params(const LmConfig& config) {
  config.validate();
  BasicParamStore<T> p;
  const std::size_t d = config.d_model, f = config.mlp_dim();
  const double s = config.init_std;
  const double resid = s / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  auto normal = [&](const std::string& name, std::vector<std::size_t> shape, double std) {
    p.add(name, normal_tensor<T>(std::move(shape), config.seed, name, std), true);
  };
  auto fill = [&](const std::string& name, std::size_t n, T value) { p.add(name, BasicTensor<T>({n}, value), true); };
  normal("embed.text", {config.text_vocab, d}, s);
  normal("embed.special", {3, d}, s);
  normal("embed.pos", {config.context, d}, s);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    fill(block_param(i, "ln1.g"), d, T(1));
    fill(block_param(i, "ln1.b"), d, T(0));
    fill(block_param(i, "ln2.g"), d, T(1));
    fill(block_param(i, "ln2.b"), d, T(0));
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv"}) normal(block_param(i, w), {d, d}, s);
    normal(block_param(i, "attn.wo"), {d, d}, resid);
    for (const char* b : {"attn.bq", "attn.bk", "attn.bv", "attn.bo", "mlp.b2"}) fill(block_param(i, b), d, T(0));
    normal(block_param(i, "mlp.w1"), {d, f}, s);
    fill(block_param(i, "mlp.b1"), f, T(0));
    normal(block_param(i, "mlp.w2"), {f, d}, resid);
  }
  fill("final.g", d, T(1));
  fill("final.b", d, T(0));
  if (config.audio_vocab > 0) {
    LmConfig c = config;
    add_audio_embeddings(p, c, config.audio_vocab, config.seed);
    p.set_trainable("embed.audio", true);
  }
  return p;
}

template <typename T>
void add_audio_embeddings(BasicParamStore<T>& params, LmConfig& config, std::size_t audio_vocab, std::uint64_t seed,
                          double noise_std) {
  if (params.contains("embed.audio")) params.erase("embed.audio");
  config.audio_vocab = audio_vocab;
  if (audio_vocab == 0) return;
  const auto& text = params.get("embed.text");
  const std::size_t d = text.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < text.rows(); ++r) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += text(r, j);
  }
  for (double& m : mean) m /= static_cast<double>(text.rows());
  BasicTensor<T> audio = normal_tensor<T>({audio_vocab, d}, seed, "embed.audio", noise_std);
  for (std::size_t r = 0; r < audio_vocab; ++r) {
    for (std::size_t j = 0; j < d; ++j) audio(r, j) += static_cast<T>(mean[j]);
  }
  params.add("embed.audio", std::move(audio), false);
}

std::vector<std::string> default_lora_targets(const LmConfig& config) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    out.push_back(block_param(i, "attn.wq"));
    out.push_back(block_param(i, "attn.wv"));
  }
  return out;
}

template <typename T>
AdapterSet attach_lora(BasicParamStore<T>& params, const std::vector<std::string>& targets, std::size_t rank,
                       double alpha, std::uint64_t seed) {
  require(rank > 0 && alpha > 0, ErrorCode::kInvalidArgument, "LoRA rank and alpha must be positive");
  AdapterSet set;
  for (const auto& target : targets) {
    require(params.contains(target) && params.get(target).rank() == 2 && target.rfind("block", 0) == 0,
            ErrorCode::kUnknownTarget, "no adaptable weight named '" + target + "'");
    LoraAdapter ad{target, rank, alpha};
    require(!params.contains(ad.a_name()), ErrorCode::kInvalidArgument, "adapter already attached to " + target);
    const auto& w = params.get(target);
    const std::size_t din = w.shape()[0], dout = w.shape()[1];
    params.add(ad.a_name(), normal_tensor<T>({rank, din}, seed, ad.a_name(), 1.0 / std::sqrt(static_cast<double>(din))),
               true);
    params.add(ad.b_name(), BasicTensor<T>({dout, rank}), true);
    set.adapters.push_back(ad);
  }
  return set;
}

template <typename T>
BasicParamStore<T> merge_lora(const BasicParamStore<T>& params, const AdapterSet& adapters) {
  BasicParamStore<T> out;
  for (const auto& [name, e] : params.entries()) {
    bool is_adapter = false;
    for (const auto& ad : adapters.adapters) is_adapter |= (name == ad.a_name() || name == ad.b_name());
    if (!is_adapter) out.add(name, e.value, e.trainable);
  }
  for (const auto& ad : adapters.adapters) {
    const auto& a = params.get(ad.a_name());
    const auto& b = params.get(ad.b_name());
    auto& w = out.mutable_value(ad.target);
    const std::size_t din = w.shape()[0], dout = w.shape()[1];
    const T s = static_cast<T>(ad.scale());
    for (std::size_t i = 0; i < din; ++i) {
      for (std::size_t j = 0; j < dout; ++j) {
        T acc = 0;
        for (std::size_t r = 0; r < ad.rank; ++r) acc += a(r, i) * b(j, r);
        w(i, j) += s * acc;
      }
    }
  }
  return out;
}

template <typename T>
void attach_head(BasicParamStore<T>& params, const LmConfig& config, std::size_t num_classes, std::uint64_t seed) {
  require(num_classes >= 2, ErrorCode::kInvalidArgument, "a classifier needs at least two classes");
  for (const char* name : {"head.weight", "head.bias"}) {
    if (params.contains(name)) params.erase(name);
  }
  params.add("head.weight", normal_tensor<T>({num_classes, config.d_model}, seed, "head.weight", config.init_std),
             true);
  params.add("head.bias", BasicTensor<T>({num_classes}), true);
}

template <typename T>
void attach_projection(BasicParamStore<T>& params, const LmConfig& config, std::size_t d_in, std::uint64_t seed,
                       bool identity_init) {
  require(d_in > 0, ErrorCode::kInvalidArgument, "projection input dimension must be positive");
  for (const char* name : {"proj.weight", "proj.bias"}) {
    if (params.contains(name)) params.erase(name);
  }
  BasicTensor<T> w({d_in, config.d_model});
  if (identity_init) {
    require(d_in == config.d_model, ErrorCode::kDimensionMismatch, "identity projection needs d_in == d_model");
    for (std::size_t i = 0; i < d_in; ++i) w(i, i) = T(1);
  } else {
    w = normal_tensor<T>({d_in, config.d_model}, seed, "proj.weight", 1.0 / std::sqrt(static_cast<double>(d_in)));
  }
  params.add("proj.weight", std::move(w), true);
  params.add("proj.bias", BasicTensor<T>({config.d_model}), true);
}

template <typename T>
std::vector<T> project_continuous_audio(std::span<const T> vector, const BasicParamStore<T>& params) {
  require(params.contains("proj.weight"), ErrorCode::kMissingPrerequisite, "no projection attached");
  const auto& w = params.get("proj.weight");
  const auto& b = params.get("proj.bias");
  require(vector.size() == w.shape()[0], ErrorCode::kDimensionMismatch,
          "vector dimension " + std::to_string(vector.size()) + " != projection input " + std::to_string(w.shape()[0]));
  std::vector<T> out(b.data().begin(), b.data().end());
  simd::gemm_nn(1, vector.size(), out.size(), vector.data(), w.raw(), out.data());
  return out;
}

template <typename T>
ForwardResult<T> forward(const FusedSequence& seq, const BasicParamStore<T>& params, const LmConfig& config,
                         const AdapterSet& adapters) {
  Model<T> model(params, config, adapters, nullptr);
  const Trace<T> tr = model.run(seq);
  std::vector<std::size_t> rows(tr.n);
  for (std::size_t i = 0; i < tr.n; ++i) rows[i] = i;
  ForwardResult<T> out;
  out.hidden = BasicTensor<T>({tr.n, config.d_model}, tr.hf);
  out.logits = model.logits(tr, rows);
  return out;
}

template <typename T>
double next_token_loss(std::span<const FusedSequence> batch, const BasicParamStore<T>& params, const LmConfig& config,
                       const AdapterSet& adapters, LossTarget target, GradMap<T>* grads) {
  require(!batch.empty(), ErrorCode::kEmptySplit, "empty batch");
  const PositionKind want = target == LossTarget::kAudio ? PositionKind::kAudio : PositionKind::kText;
  std::vector<std::vector<std::size_t>> rows(batch.size());
  std::size_t total = 0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto& seq = batch[s];
    for (std::size_t p = 0; p + 1 < seq.size(); ++p) {
      if (seq.kinds[p + 1] == want) rows[s].push_back(p);
    }
    if (target == LossTarget::kAudio) {
      require(!rows[s].empty(), ErrorCode::kNoAudioPositions, "sequence " + std::to_string(s) + " has no audio tokens");
    }
    total += rows[s].size();
  }
  require(total > 0, ErrorCode::kEmptyMask, "no target positions in batch");

  Model<T> model(params, config, adapters, grads);
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    if (rows[s].empty()) continue;
    const auto& seq = batch[s];
    const Trace<T> tr = model.run(seq);
    const BasicTensor<T> logits = model.logits(tr, rows[s]);
    std::vector<std::int32_t> targets;
    for (std::size_t p : rows[s]) targets.push_back(seq.ids[p + 1]);
    const std::vector<std::uint8_t> mask(targets.size(), 1);
    MaskedLoss<T> ce = cross_entropy_masked(logits, targets, mask, grads != nullptr);
    const double weight = static_cast<double>(ce.count) / static_cast<double>(total);
    loss += static_cast<double>(ce.loss) * weight;
    if (grads != nullptr) {
      for (T& g : ce.grad.data()) g *= static_cast<T>(weight);
      std::vector<T> dhf(tr.n * config.d_model, T(0));
      model.logits_backward(tr, rows[s], ce.grad, dhf);
      model.backward(seq, tr, dhf);
    }
  }
  return loss;
}

namespace {

template <typename T>
std::vector<T> head_logits(const BasicParamStore<T>& params, const T* h, std::size_t d) {
  require(params.contains("head.weight") && params.contains("head.bias"), ErrorCode::kMissingHead,
          "no classification head attached");
  const auto& w = params.get("head.weight");
  const auto& b = params.get("head.bias");
  require(w.cols() == d, ErrorCode::kShapeMismatch, "head width != d_model");
  std::vector<T> z(b.data().begin(), b.data().end());
  simd::gemm_nt(1, d, z.size(), h, w.raw(), z.data());
  return z;
}

}  // namespace

template <typename T>
std::vector<double> classify(const FusedSequence& seq, const BasicParamStore<T>& params, const LmConfig& config,
                             const AdapterSet& adapters) {
  require(params.contains("head.weight"), ErrorCode::kMissingHead, "no classification head attached");
  Model<T> model(params, config, adapters, nullptr);
  const Trace<T> tr = model.run(seq);
  std::vector<T> z = head_logits(params, tr.hf.data() + (tr.n - 1) * config.d_model, config.d_model);
  softmax_inplace(std::span<T>(z));
  return {z.begin(), z.end()};
}

template <typename T>
double classification_loss(std::span<const FusedSequence> batch, const BasicParamStore<T>& params,
                           const LmConfig& config, const AdapterSet& adapters, GradMap<T>* grads) {
  require(!batch.empty(), ErrorCode::kEmptySplit, "empty batch");
  require(params.contains("head.weight"), ErrorCode::kMissingHead, "no classification head attached");
  Model<T> model(params, config, adapters, grads);
  const std::size_t d = config.d_model;
  const std::size_t classes = params.get("head.bias").size();
  BasicTensor<T>* gw = grad_slot(grads, "head.weight");
  BasicTensor<T>* gb = grad_slot(grads, "head.bias");
  const T inv_b = T(1) / static_cast<T>(batch.size());
  double loss = 0.0;
  for (const auto& seq : batch) {
    require(seq.label.has_value(), ErrorCode::kInvalidArgument, "unlabelled sequence in a classification batch");
    const auto y = static_cast<std::size_t>(*seq.label);
    require(y < classes, ErrorCode::kLabelOutOfRange, "label " + std::to_string(y));
    const Trace<T> tr = model.run(seq);
    const T* h = tr.hf.data() + (tr.n - 1) * d;
    std::vector<T> z = head_logits(params, h, d);
    T mx = z[0];
    for (T v : z) mx = std::max(mx, v);
    T sum = 0;
    for (T v : z) sum += std::exp(v - mx);
    loss += static_cast<double>(mx + std::log(sum) - z[y]) / static_cast<double>(batch.size());
    if (grads == nullptr) continue;
    std::vector<T> dz(classes);
    for (std::size_t c = 0; c < classes; ++c) dz[c] = (std::exp(z[c] - mx) / sum - (c == y ? T(1) : T(0))) * inv_b;
    if (gw != nullptr) simd::gemm_tn(1, classes, d, dz.data(), h, gw->raw());
    if (gb != nullptr) simd::axpy(T(1), dz.data(), gb->raw(), classes);
    std::vector<T> dhf(tr.n * d, T(0));
    simd::gemm_nn(1, classes, d, dz.data(), params.get("head.weight").raw(), dhf.data() + (tr.n - 1) * d);
    model.backward(seq, tr, dhf);
  }
  return loss;
}

#define SPTOK_INSTANTIATE(T)                                                                                        \
  template BasicParamStore<T> init_params<T>(const LmConfig&);                                                      \
  template void add_audio_embeddings<T>(BasicParamStore<T>&, LmConfig&, std::size_t, std::uint64_t, double);        \
  template AdapterSet attach_lora<T>(BasicParamStore<T>&, const std::vector<std::string>&, std::size_t, double,     \
                                     std::uint64_t);                                                                \
  template BasicParamStore<T> merge_lora<T>(const BasicParamStore<T>&, const AdapterSet&);                          \
  template void attach_head<T>(BasicParamStore<T>&, const LmConfig&, std::size_t, std::uint64_t);                   \
  template void attach_projection<T>(BasicParamStore<T>&, const LmConfig&, std::size_t, std::uint64_t, bool);       \
  template std::vector<T> project_continuous_audio<T>(std::span<const T>, const BasicParamStore<T>&);               \
  template ForwardResult<T> forward<T>(const FusedSequence&, const BasicParamStore<T>&, const LmConfig&,            \
                                       const AdapterSet&);                                                          \
  template double next_token_loss<T>(std::span<const FusedSequence>, const BasicParamStore<T>&, const LmConfig&,    \
                                     const AdapterSet&, LossTarget, GradMap<T>*);                                   \
  template std::vector<double> classify<T>(const FusedSequence&, const BasicParamStore<T>&, const LmConfig&,        \
                                           const AdapterSet&);                                                      \
  template double classification_loss<T>(std::span<const FusedSequence>, const BasicParamStore<T>&,                \
                                         const LmConfig&, const AdapterSet&, GradMap<T>*);

SPTOK_INSTANTIATE(float)
SPTOK_INSTANTIATE(double)

}  // namespace sptok::lm
