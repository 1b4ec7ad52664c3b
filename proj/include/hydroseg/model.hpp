#pragma once

// The two segmentation networks. Both produce (N,1,H,W) logits and are built
// purely from tape primitives, so one code path serves training (params
// registered as leaves) and inference (params left constant).

#include <zlib.h>

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hydroseg/common.hpp"
#include "hydroseg/rng.hpp"
#include "hydroseg/tensor.hpp"

namespace hydroseg {

struct SegFormerTinyConfig {
  std::vector<int> embed_dims{16, 32};
  std::vector<int> heads{1, 2};
  std::vector<int> reduction_ratios{4, 2};
  std::vector<int> blocks_per_stage{2, 2};
  std::vector<int> patch_strides{4, 2};
  int decoder_dim = 32;
  int mlp_expansion = 4;

  int stages() const { return int(embed_dims.size()); }
  int total_stride() const {
    int s = 1;
    for (int v : patch_strides) s *= v;
    return s;
  }
};

inline void validate(const SegFormerTinyConfig& cfg) {
  const size_t n = cfg.embed_dims.size();
  require(n >= 1, errkind::config, "segformer needs at least one stage");
  require(cfg.heads.size() == n && cfg.reduction_ratios.size() == n &&
              cfg.blocks_per_stage.size() == n && cfg.patch_strides.size() == n,
          errkind::config, "segformer per-stage arrays must have equal length");
  for (size_t i = 0; i < n; ++i) {
    require(cfg.embed_dims[i] > 0 && cfg.heads[i] > 0 && cfg.reduction_ratios[i] > 0 &&
                cfg.blocks_per_stage[i] > 0 && cfg.patch_strides[i] > 0,
            errkind::config, "segformer config values must be positive");
    require(cfg.embed_dims[i] % cfg.heads[i] == 0, errkind::config,
            "embed_dim must be divisible by heads");
  }
  require(cfg.decoder_dim > 0 && cfg.mlp_expansion > 0, errkind::config,
          "decoder config must be positive");
}

struct UNetTinyConfig {
  int depth = 3;
  int base_channels = 8;
};

inline void validate(const UNetTinyConfig& cfg) {
  require(cfg.depth >= 1, errkind::config, "unet depth must be >= 1");
  require(cfg.base_channels >= 1, errkind::config, "unet base_channels must be >= 1");
}

inline std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

/// Canonical architecture string; hashed into the checkpoint fingerprint.
inline std::string config_blob(const SegFormerTinyConfig& c) {
  std::ostringstream os;
  os << "{\"model\":\"segformer-tiny\",\"embed_dims\":[" << join_ints(c.embed_dims)
     << "],\"heads\":[" << join_ints(c.heads) << "],\"reduction_ratios\":["
     << join_ints(c.reduction_ratios) << "],\"blocks_per_stage\":["
     << join_ints(c.blocks_per_stage) << "],\"patch_strides\":[" << join_ints(c.patch_strides)
     << "],\"decoder_dim\":" << c.decoder_dim << ",\"mlp_expansion\":" << c.mlp_expansion << "}";
  return os.str();
}

inline std::string config_blob(const UNetTinyConfig& c) {
  std::ostringstream os;
  os << "{\"model\":\"unet-tiny\",\"depth\":" << c.depth
     << ",\"base_channels\":" << c.base_channels << "}";
  return os.str();
}

inline uint32_t fingerprint_of(const std::string& blob) {
  return uint32_t(::crc32(0L, reinterpret_cast<const Bytef*>(blob.data()), uInt(blob.size())));
}

template <typename T>
struct ModelParams {
  std::map<std::string, Tensor<T>> named;
  std::string config_json;
  uint32_t fingerprint = 0;
};

namespace detail {

template <typename T>
class ParamFactory {
 public:
  ParamFactory(std::map<std::string, Tensor<T>>& named, Rng& rng) : named_(named), rng_(rng) {}

  void weight(const std::string& name, std::vector<int> shape) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = T(rng_.trunc_normal(0.02));
    put(name, std::move(t));
  }
  void zeros(const std::string& name, std::vector<int> shape) {
    put(name, Tensor<T>(std::move(shape)));
  }
  void ones(const std::string& name, std::vector<int> shape) {
    put(name, Tensor<T>::full(std::move(shape), T(1)));
  }
  void layernorm(const std::string& prefix, int dim) {
    ones(prefix + ".g", {dim});
    zeros(prefix + ".b", {dim});
  }
  void linear(const std::string& prefix, int in, int out) {
    weight(prefix + ".w", {in, out});
    zeros(prefix + ".b", {out});
  }

 private:
  void put(const std::string& name, Tensor<T> t) {
    require(!named_.count(name), errkind::bad_argument, "duplicate parameter " + name);
    named_.emplace(name, std::move(t));
  }
  std::map<std::string, Tensor<T>>& named_;
  Rng& rng_;
};

}  // namespace detail

template <typename T = float>
ModelParams<T> build_segformer_tiny(const SegFormerTinyConfig& cfg, uint64_t seed) {
  validate(cfg);
  ModelParams<T> params;
  params.config_json = config_blob(cfg);
  params.fingerprint = fingerprint_of(params.config_json);
  Rng rng(seed);
  detail::ParamFactory<T> f(params.named, rng);

  int in_ch = 3;
  for (int s = 0; s < cfg.stages(); ++s) {
    const std::string sp = "s" + std::to_string(s);
    const int C = cfg.embed_dims[size_t(s)];
    const int k = s == 0 ? 7 : 3;
    f.weight(sp + ".embed.conv.w", {C, in_ch, k, k});
    f.zeros(sp + ".embed.conv.b", {C});
    f.layernorm(sp + ".embed.ln", C);
    const int eC = C * cfg.mlp_expansion;
    for (int b = 0; b < cfg.blocks_per_stage[size_t(s)]; ++b) {
      const std::string bp = sp + ".b" + std::to_string(b);
      f.layernorm(bp + ".ln1", C);
      f.linear(bp + ".attn.q", C, C);
      if (cfg.reduction_ratios[size_t(s)] > 1) {
        f.linear(bp + ".attn.sr", C, C);
        f.layernorm(bp + ".attn.srln", C);
      }
      f.linear(bp + ".attn.k", C, C);
      f.linear(bp + ".attn.v", C, C);
      f.linear(bp + ".attn.o", C, C);
      f.layernorm(bp + ".ln2", C);
      f.linear(bp + ".mlp.fc1", C, eC);
      f.weight(bp + ".mlp.dw.w", {eC, 3, 3});
      f.zeros(bp + ".mlp.dw.b", {eC});
      f.linear(bp + ".mlp.fc2", eC, C);
    }
    f.layernorm(sp + ".norm", C);
    in_ch = C;
  }
  for (int s = 0; s < cfg.stages(); ++s)
    f.linear("dec.proj" + std::to_string(s), cfg.embed_dims[size_t(s)], cfg.decoder_dim);
  f.linear("dec.fuse", cfg.stages() * cfg.decoder_dim, cfg.decoder_dim);
  f.linear("dec.logit", cfg.decoder_dim, 1);
  return params;
}

namespace detail {

template <typename T>
const Tensor<T>& pget(const std::map<std::string, Tensor<T>>& params, const std::string& name) {
  auto it = params.find(name);
  require(it != params.end(), errkind::bad_argument, "missing parameter " + name);
  return it->second;
}

template <typename T>
Tensor<T> linear_op(Tape<T>& tape, const std::map<std::string, Tensor<T>>& p,
                    const Tensor<T>& x, const std::string& prefix) {
  return tape.add_bias(tape.matmul(x, pget(p, prefix + ".w")), pget(p, prefix + ".b"));
}

// (N,C,H,W) -> (N, H*W, C)
template <typename T>
Tensor<T> to_tokens(Tape<T>& tape, const Tensor<T>& x) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  return tape.permute(tape.reshape(x, {N, C, H * W}), {0, 2, 1});
}

// (N, H*W, C) -> (N,C,H,W)
template <typename T>
Tensor<T> to_map(Tape<T>& tape, const Tensor<T>& tok, int H, int W) {
  const int N = tok.dim(0), C = tok.dim(2);
  return tape.reshape(tape.permute(tok, {0, 2, 1}), {N, C, H, W});
}

}  // namespace detail

/// Hierarchical-attention encoder + all-MLP decoder. No positional encodings,
/// so any input whose sides divide by the stage stride product is accepted.
template <typename T>
Tensor<T> segformer_forward(Tape<T>& tape, const SegFormerTinyConfig& cfg,
                            const std::map<std::string, Tensor<T>>& p, const Tensor<T>& x) {
  using namespace detail;
  validate(cfg);
  require(x.rank() == 4 && x.dim(1) == 3, errkind::shape_mismatch,
          "segformer_forward expects (N,3,H,W)");
  const int N = x.dim(0), H = x.dim(2), W = x.dim(3);
  require(H % cfg.total_stride() == 0 && W % cfg.total_stride() == 0, errkind::bad_argument,
          "input size must divide by the stage stride product");

  std::vector<Tensor<T>> stage_maps;
  std::vector<std::pair<int, int>> stage_dims;
  Tensor<T> cur = x;
  int Hs = H, Ws = W;
  for (int s = 0; s < cfg.stages(); ++s) {
    const std::string sp = "s" + std::to_string(s);
    const int C = cfg.embed_dims[size_t(s)];
    const int R = cfg.reduction_ratios[size_t(s)];
    const int nheads = cfg.heads[size_t(s)];
    const int hd = C / nheads;
    const int k = s == 0 ? 7 : 3;
    const int pad = k / 2;
    const int stride = cfg.patch_strides[size_t(s)];

    cur = tape.conv2d(cur, pget(p, sp + ".embed.conv.w"), pget(p, sp + ".embed.conv.b"), stride,
                      pad, /*reflect=*/true);
    Hs /= stride;
    Ws /= stride;
    const int Tn = Hs * Ws;
    Tensor<T> tok = to_tokens(tape, cur);
    tok = tape.layernorm_last(tok, pget(p, sp + ".embed.ln.g"), pget(p, sp + ".embed.ln.b"));

    for (int b = 0; b < cfg.blocks_per_stage[size_t(s)]; ++b) {
      const std::string bp = sp + ".b" + std::to_string(b);
      // efficient self-attention with spatially reduced keys/values
      Tensor<T> h = tape.layernorm_last(tok, pget(p, bp + ".ln1.g"), pget(p, bp + ".ln1.b"));
      Tensor<T> q = linear_op(tape, p, h, bp + ".attn.q");
      Tensor<T> kv = h;
      int Tkv = Tn;
      if (R > 1) {
        require(Hs % R == 0 && Ws % R == 0, errkind::bad_argument,
                "stage resolution must divide by its reduction ratio");
        Tensor<T> fm = tape.avgpool(to_map(tape, h, Hs, Ws), R);
        Tkv = (Hs / R) * (Ws / R);
        kv = to_tokens(tape, fm);
        kv = linear_op(tape, p, kv, bp + ".attn.sr");
        kv = tape.layernorm_last(kv, pget(p, bp + ".attn.srln.g"), pget(p, bp + ".attn.srln.b"));
      }
      Tensor<T> kk = linear_op(tape, p, kv, bp + ".attn.k");
      Tensor<T> vv = linear_op(tape, p, kv, bp + ".attn.v");

      auto split_heads = [&](const Tensor<T>& t, int Tlen) {
        return tape.reshape(tape.permute(tape.reshape(t, {N, Tlen, nheads, hd}), {0, 2, 1, 3}),
                            {N * nheads, Tlen, hd});
      };
      Tensor<T> qh = split_heads(q, Tn);
      Tensor<T> kh = split_heads(kk, Tkv);
      Tensor<T> vh = split_heads(vv, Tkv);

      Tensor<T> att = tape.bmm(qh, tape.permute(kh, {0, 2, 1}));
      att = tape.scalar_mul(att, T(1.0 / std::sqrt(double(hd))));
      att = tape.softmax_last(att);
      Tensor<T> ctx = tape.bmm(att, vh);  // (N*heads, Tn, hd)
      ctx = tape.reshape(tape.permute(tape.reshape(ctx, {N, nheads, Tn, hd}), {0, 2, 1, 3}),
                         {N, Tn, C});
      ctx = linear_op(tape, p, ctx, bp + ".attn.o");
      tok = tape.add(tok, ctx);

      // MLP with a depthwise 3x3 between the two linear maps
      Tensor<T> h2 = tape.layernorm_last(tok, pget(p, bp + ".ln2.g"), pget(p, bp + ".ln2.b"));
      Tensor<T> f1 = linear_op(tape, p, h2, bp + ".mlp.fc1");
      Tensor<T> fm = to_map(tape, f1, Hs, Ws);
      fm = tape.dwconv3x3(fm, pget(p, bp + ".mlp.dw.w"), pget(p, bp + ".mlp.dw.b"),
                          /*reflect=*/true);
      Tensor<T> f1b = tape.gelu(to_tokens(tape, fm));
      Tensor<T> f2 = linear_op(tape, p, f1b, bp + ".mlp.fc2");
      tok = tape.add(tok, f2);
    }
    tok = tape.layernorm_last(tok, pget(p, sp + ".norm.g"), pget(p, sp + ".norm.b"));
    cur = to_map(tape, tok, Hs, Ws);
    stage_maps.push_back(cur);
    stage_dims.emplace_back(Hs, Ws);
  }

  // all-MLP decoder: project, upsample to stage-1 grid, concat, fuse, predict
  const int H1 = stage_dims[0].first, W1 = stage_dims[0].second;
  std::vector<Tensor<T>> projected;
  for (int s = 0; s < cfg.stages(); ++s) {
    Tensor<T> tok = to_tokens(tape, stage_maps[size_t(s)]);
    tok = linear_op(tape, p, tok, "dec.proj" + std::to_string(s));
    Tensor<T> fm = to_map(tape, tok, stage_dims[size_t(s)].first, stage_dims[size_t(s)].second);
    projected.push_back(tape.bilinear_resize(fm, H1, W1));
  }
  Tensor<T> cat = tape.concat(projected, 1);
  Tensor<T> tokc = to_tokens(tape, cat);
  Tensor<T> fused = tape.relu(linear_op(tape, p, tokc, "dec.fuse"));
  Tensor<T> logit_tok = linear_op(tape, p, fused, "dec.logit");
  Tensor<T> lm = to_map(tape, logit_tok, H1, W1);
  return tape.bilinear_resize(lm, H, W);
}

template <typename T = float>
ModelParams<T> build_unet_tiny(const UNetTinyConfig& cfg, uint64_t seed) {
  validate(cfg);
  ModelParams<T> params;
  params.config_json = config_blob(cfg);
  params.fingerprint = fingerprint_of(params.config_json);
  Rng rng(seed);
  detail::ParamFactory<T> f(params.named, rng);

  auto conv = [&](const std::string& name, int cin, int cout) {
    f.weight(name + ".w", {cout, cin, 3, 3});
    f.zeros(name + ".b", {cout});
  };
  int in_ch = 3;
  for (int l = 0; l < cfg.depth; ++l) {
    const int out_ch = cfg.base_channels << l;
    conv("enc" + std::to_string(l) + ".c1", in_ch, out_ch);
    conv("enc" + std::to_string(l) + ".c2", out_ch, out_ch);
    in_ch = out_ch;
  }
  const int bott_ch = cfg.base_channels << cfg.depth;
  conv("bott.c1", in_ch, bott_ch);
  conv("bott.c2", bott_ch, bott_ch);
  int cur_ch = bott_ch;
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const int skip_ch = cfg.base_channels << l;
    conv("dec" + std::to_string(l) + ".c1", cur_ch + skip_ch, skip_ch);
    conv("dec" + std::to_string(l) + ".c2", skip_ch, skip_ch);
    cur_ch = skip_ch;
  }
  f.weight("head.w", {1, cfg.base_channels, 1, 1});
  f.zeros("head.b", {1});
  return params;
}

/// Plain encoder-decoder with skip concatenations; bilinear upsampling.
template <typename T>
Tensor<T> unet_forward(Tape<T>& tape, const UNetTinyConfig& cfg,
                       const std::map<std::string, Tensor<T>>& p, const Tensor<T>& x) {
  using namespace detail;
  validate(cfg);
  require(x.rank() == 4 && x.dim(1) == 3, errkind::shape_mismatch,
          "unet_forward expects (N,3,H,W)");
  const int H = x.dim(2), W = x.dim(3);
  const int div = 1 << cfg.depth;
  require(H % div == 0 && W % div == 0, errkind::bad_argument,
          "input size must divide by 2^depth");

  auto conv_relu = [&](const Tensor<T>& in, const std::string& name) {
    return tape.relu(
        tape.conv2d(in, pget(p, name + ".w"), pget(p, name + ".b"), 1, 1, /*reflect=*/true));
  };

  std::vector<Tensor<T>> skips;
  Tensor<T> cur = x;
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string ep = "enc" + std::to_string(l);
    cur = conv_relu(cur, ep + ".c1");
    cur = conv_relu(cur, ep + ".c2");
    skips.push_back(cur);
    cur = tape.avgpool(cur, 2);
  }
  cur = conv_relu(cur, "bott.c1");
  cur = conv_relu(cur, "bott.c2");
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const std::string dp = "dec" + std::to_string(l);
    cur = tape.bilinear_resize(cur, skips[size_t(l)].dim(2), skips[size_t(l)].dim(3));
    cur = tape.concat({cur, skips[size_t(l)]}, 1);
    cur = conv_relu(cur, dp + ".c1");
    cur = conv_relu(cur, dp + ".c2");
  }
  return tape.conv2d(cur, pget(p, "head.w"), pget(p, "head.b"), 1, 0, false);
}

/// Model variant dispatch used by the training loop and the tools.
struct ModelSpec {
  enum class Kind { segformer, unet } kind = Kind::segformer;
  SegFormerTinyConfig segformer;
  UNetTinyConfig unet;

  std::string config_json() const {
    return kind == Kind::segformer ? config_blob(segformer) : config_blob(unet);
  }
  int size_divisor() const {
    return kind == Kind::segformer ? segformer.total_stride() : (1 << unet.depth);
  }
};

template <typename T = float>
ModelParams<T> build_model(const ModelSpec& spec, uint64_t seed) {
  return spec.kind == ModelSpec::Kind::segformer ? build_segformer_tiny<T>(spec.segformer, seed)
                                                 : build_unet_tiny<T>(spec.unet, seed);
}

template <typename T>
Tensor<T> model_forward(Tape<T>& tape, const ModelSpec& spec,
                        const std::map<std::string, Tensor<T>>& params, const Tensor<T>& x) {
  return spec.kind == ModelSpec::Kind::segformer
             ? segformer_forward(tape, spec.segformer, params, x)
             : unet_forward(tape, spec.unet, params, x);
}

}  // namespace hydroseg
