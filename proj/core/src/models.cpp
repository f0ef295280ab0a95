#include "slm/models.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <stdexcept>

#include "slm/preprocess.hpp"

namespace slm {
namespace models {

using nlohmann::json;
using namespace ops;

namespace {

Tensor init_weight(std::vector<int> shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

struct Conv {
  Tensor w, b;
  int stride = 1, pad = 1;

  static Conv make(int in_ch, int out_ch, int k, int pad, Rng& rng) {
    Conv c;
    c.w = init_weight({out_ch, in_ch, k, k}, in_ch * k * k, rng);
    c.b = Tensor::zeros({out_ch}, true);
    c.pad = pad;
    return c;
  }
  Tensor operator()(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct BN {
  Tensor gamma, beta;
  BatchNormState state;

  static BN make(int ch) {
    BN b;
    b.gamma = Tensor::full({ch}, 1.0, true);
    b.beta = Tensor::zeros({ch}, true);
    b.state = BatchNormState::make(ch);
    return b;
  }
  Tensor operator()(const Tensor& x, Mode mode) {
    return batch_norm(x, gamma, beta, mode, state);
  }
};

// conv3x3 + BN + ReLU, twice
struct ConvBlock {
  Conv c1, c2;
  BN b1, b2;

  static ConvBlock make(int in_ch, int out_ch, Rng& rng) {
    ConvBlock cb;
    cb.c1 = Conv::make(in_ch, out_ch, 3, 1, rng);
    cb.b1 = BN::make(out_ch);
    cb.c2 = Conv::make(out_ch, out_ch, 3, 1, rng);
    cb.b2 = BN::make(out_ch);
    return cb;
  }
  Tensor operator()(const Tensor& x, Mode mode) {
    Tensor t = relu(b1(c1(x), mode));
    return relu(b2(c2(t), mode));
  }
};

struct Up {
  Tensor w;  // [C, K, 2, 2]

  static Up make(int in_ch, int out_ch, Rng& rng) {
    Up u;
    u.w = init_weight({in_ch, out_ch, 2, 2}, in_ch * 4, rng);
    return u;
  }
  Tensor operator()(const Tensor& x) const { return conv_transpose2x2_s2(x, w); }
};

struct FC {
  Tensor w, b;

  static FC make(int in_dim, int out_dim, Rng& rng) {
    FC f;
    f.w = init_weight({out_dim, in_dim}, in_dim, rng);
    f.b = Tensor::zeros({out_dim}, true);
    return f;
  }
  Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
};

// name registration helpers
void reg(std::vector<NamedTensor>& out, const std::string& name, Conv& c) {
  out.push_back({name + ".w", c.w, true});
  out.push_back({name + ".b", c.b, true});
}
void reg(std::vector<NamedTensor>& out, const std::string& name, BN& b) {
  out.push_back({name + ".gamma", b.gamma, true});
  out.push_back({name + ".beta", b.beta, true});
  out.push_back({name + ".running_mean", b.state.running_mean, false});
  out.push_back({name + ".running_var", b.state.running_var, false});
}
void reg(std::vector<NamedTensor>& out, const std::string& name, ConvBlock& cb) {
  reg(out, name + ".conv1", cb.c1);
  reg(out, name + ".bn1", cb.b1);
  reg(out, name + ".conv2", cb.c2);
  reg(out, name + ".bn2", cb.b2);
}
void reg(std::vector<NamedTensor>& out, const std::string& name, FC& f) {
  out.push_back({name + ".w", f.w, true});
  out.push_back({name + ".b", f.b, true});
}

void check_divisible(const Tensor& x, int depth) {
  const int H = x.dim(2), W = x.dim(3);
  const int div = 1 << depth;
  if (H % div != 0 || W % div != 0)
    throw std::invalid_argument("input spatial dims must be divisible by 2^depth");
}

// U-Net encoder plus bottleneck, shared by the segmentation and the
// direct-estimation models so weight transfer is copy-by-name.
struct EncoderPath {
  std::vector<ConvBlock> enc;
  ConvBlock bottleneck;
  double dropout_p = 0.5;
  int depth = 5;

  static EncoderPath make(const UNetConfig& cfg, Rng& rng) {
    if (cfg.depth < 1) throw std::invalid_argument("UNetConfig: depth must be >= 1");
    EncoderPath e;
    e.depth = cfg.depth;
    e.dropout_p = cfg.dropout_p;
    int ch = cfg.in_channels;
    for (int l = 0; l < cfg.depth; ++l) {
      const int out_ch = cfg.base_channels << l;
      e.enc.push_back(ConvBlock::make(ch, out_ch, rng));
      ch = out_ch;
    }
    e.bottleneck = ConvBlock::make(ch, cfg.base_channels << cfg.depth, rng);
    return e;
  }

  // returns bottleneck output; skips filled per level when requested
  Tensor run(const Tensor& x, Mode mode, Rng& rng, std::vector<Tensor>* skips) {
    check_divisible(x, depth);
    Tensor t = x;
    for (auto& block : enc) {
      t = block(t, mode);
      if (skips) skips->push_back(t);
      t = max_pool2(t);
    }
    t = bottleneck(t, mode);
    return dropout(t, dropout_p, mode, rng);
  }

  void register_tensors(std::vector<NamedTensor>& out) {
    for (std::size_t l = 0; l < enc.size(); ++l)
      reg(out, "enc" + std::to_string(l), enc[l]);
    reg(out, "bottleneck", bottleneck);
  }
};

struct FCHead {
  std::vector<FC> fcs;
  std::vector<BN> bns;
  FC out;

  static FCHead make(int in_dim, int nodes, int layers, int out_dim, Rng& rng) {
    FCHead h;
    int d = in_dim;
    for (int i = 0; i < layers; ++i) {
      h.fcs.push_back(FC::make(d, nodes, rng));
      h.bns.push_back(BN::make(nodes));
      d = nodes;
    }
    h.out = FC::make(d, out_dim, rng);
    return h;
  }
  Tensor run(const Tensor& x, Mode mode) {
    Tensor t = x;
    for (std::size_t i = 0; i < fcs.size(); ++i) t = relu(bns[i](fcs[i](t), mode));
    return out(t);
  }
  void register_tensors(std::vector<NamedTensor>& o) {
    for (std::size_t i = 0; i < fcs.size(); ++i) {
      reg(o, "head.fc" + std::to_string(i + 1), fcs[i]);
      reg(o, "head.bn" + std::to_string(i + 1), bns[i]);
    }
    reg(o, "head.out", out);
  }
};

class UNetModel final : public Model {
 public:
  UNetModel(const UNetConfig& cfg, Rng& rng) : cfg_(cfg), path_(EncoderPath::make(cfg, rng)) {
    const int base = cfg.base_channels;
    for (int l = cfg.depth - 1; l >= 0; --l) {
      const int ch = base << (l + 1);  // channels arriving at this level
      ups_.push_back(Up::make(ch, ch / 2, rng));
      dec_.push_back(ConvBlock::make(ch, ch / 2, rng));
    }
    out_ = Conv::make(base, 1, 1, 0, rng);
  }

  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override {
    std::vector<Tensor> skips;
    Tensor t = path_.run(x, mode, rng, &skips);
    for (std::size_t i = 0; i < ups_.size(); ++i) {
      t = ups_[i](t);
      t = concat_channels(skips[skips.size() - 1 - i], t);
      t = dec_[i](t, mode);
    }
    return sigmoid(out_(t));
  }

  Tensor encode(const Tensor& x, Mode mode, Rng& rng) override {
    return flatten(path_.run(x, mode, rng, nullptr));
  }

  std::vector<NamedTensor> named_tensors() override {
    std::vector<NamedTensor> o;
    path_.register_tensors(o);
    for (std::size_t i = 0; i < ups_.size(); ++i) {
      const std::string lvl = std::to_string(ups_.size() - 1 - i);
      o.push_back({"dec" + lvl + ".up.w", ups_[i].w, true});
      reg(o, "dec" + lvl, dec_[i]);
    }
    reg(o, "out", out_);
    return o;
  }

  std::string arch_tag() const override { return "SB"; }
  std::string config_json() const override {
    return json{{"in_channels", cfg_.in_channels},
                {"base_channels", cfg_.base_channels},
                {"depth", cfg_.depth},
                {"dropout_p", cfg_.dropout_p}}
        .dump();
  }

 private:
  UNetConfig cfg_;
  EncoderPath path_;
  std::vector<Up> ups_;
  std::vector<ConvBlock> dec_;
  Conv out_;
};

int regressor_latent_dim(const RegressorConfig& cfg) {
  const int div = 1 << cfg.encoder.depth;
  if (cfg.input_height % div != 0 || cfg.input_width % div != 0)
    throw std::invalid_argument("RegressorConfig: input dims must be divisible by 2^depth");
  const int ch = cfg.encoder.base_channels << cfg.encoder.depth;
  return ch * (cfg.input_height / div) * (cfg.input_width / div);
}

class EncoderRegressorModel final : public Model {
 public:
  EncoderRegressorModel(const RegressorConfig& cfg, Rng& rng)
      : cfg_(cfg),
        path_(EncoderPath::make(cfg.encoder, rng)),
        head_(FCHead::make(regressor_latent_dim(cfg), cfg.fc_nodes, cfg.fc_layers,
                           cfg.output_dim, rng)) {}

  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override {
    Tensor latent = flatten(path_.run(x, mode, rng, nullptr));
    if (latent.dim(1) != regressor_latent_dim(cfg_))
      throw std::invalid_argument("encoder-regressor: input size differs from the configured one");
    return head_.run(latent, mode);
  }

  Tensor encode(const Tensor& x, Mode mode, Rng& rng) override {
    return flatten(path_.run(x, mode, rng, nullptr));
  }

  std::vector<NamedTensor> named_tensors() override {
    std::vector<NamedTensor> o;
    path_.register_tensors(o);
    head_.register_tensors(o);
    return o;
  }

  std::string arch_tag() const override { return "DE"; }
  std::string config_json() const override {
    return json{{"encoder",
                 {{"in_channels", cfg_.encoder.in_channels},
                  {"base_channels", cfg_.encoder.base_channels},
                  {"depth", cfg_.encoder.depth},
                  {"dropout_p", cfg_.encoder.dropout_p}}},
                {"input_height", cfg_.input_height},
                {"input_width", cfg_.input_width},
                {"fc_nodes", cfg_.fc_nodes},
                {"fc_layers", cfg_.fc_layers},
                {"output_dim", cfg_.output_dim}}
        .dump();
  }

 private:
  RegressorConfig cfg_;
  EncoderPath path_;
  FCHead head_;
};

int vgg_latent_dim(const VGGConfig& cfg) {
  const int div = 1 << cfg.stage_widths.size();
  if (cfg.input_height % div != 0 || cfg.input_width % div != 0)
    throw std::invalid_argument("VGGConfig: input dims must be divisible by 2^5");
  return cfg.stage_widths.back() * (cfg.input_height / div) * (cfg.input_width / div);
}

class VGGRegressorModel final : public Model {
 public:
  VGGRegressorModel(const VGGConfig& cfg, Rng& rng) : cfg_(cfg) {
    int ch = cfg.in_channels;
    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
      std::vector<Conv> stage;
      std::vector<BN> bns;
      for (int i = 0; i < cfg.stage_convs[s]; ++i) {
        stage.push_back(Conv::make(ch, cfg.stage_widths[s], 3, 1, rng));
        bns.push_back(BN::make(cfg.stage_widths[s]));
        ch = cfg.stage_widths[s];
      }
      convs_.push_back(std::move(stage));
      bns_.push_back(std::move(bns));
    }
    head_ = FCHead::make(vgg_latent_dim(cfg), cfg.fc_nodes, cfg.fc_layers, 1, rng);
  }

  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override {
    Tensor latent = encode(x, mode, rng);
    if (latent.dim(1) != vgg_latent_dim(cfg_))
      throw std::invalid_argument("vgg-regressor: input size differs from the configured one");
    return head_.run(latent, mode);
  }

  Tensor encode(const Tensor& x, Mode mode, Rng& /*rng*/) override {
    check_divisible(x, static_cast<int>(convs_.size()));
    Tensor t = x;
    for (std::size_t s = 0; s < convs_.size(); ++s) {
      for (std::size_t i = 0; i < convs_[s].size(); ++i)
        t = relu(bns_[s][i](convs_[s][i](t), mode));
      t = max_pool2(t);
    }
    return flatten(t);
  }

  std::vector<NamedTensor> named_tensors() override {
    std::vector<NamedTensor> o;
    for (std::size_t s = 0; s < convs_.size(); ++s) {
      for (std::size_t i = 0; i < convs_[s].size(); ++i) {
        const std::string name =
            "stage" + std::to_string(s) + ".conv" + std::to_string(i + 1);
        reg(o, name, convs_[s][i]);
        reg(o, "stage" + std::to_string(s) + ".bn" + std::to_string(i + 1), bns_[s][i]);
      }
    }
    head_.register_tensors(o);
    return o;
  }

  std::string arch_tag() const override { return "VGG"; }
  std::string config_json() const override {
    return json{{"in_channels", cfg_.in_channels},
                {"input_height", cfg_.input_height},
                {"input_width", cfg_.input_width},
                {"stage_widths", cfg_.stage_widths},
                {"stage_convs", cfg_.stage_convs},
                {"fc_nodes", cfg_.fc_nodes},
                {"fc_layers", cfg_.fc_layers}}
        .dump();
  }

 private:
  VGGConfig cfg_;
  std::vector<std::vector<Conv>> convs_;
  std::vector<std::vector<BN>> bns_;
  FCHead head_;
};

}  // namespace

std::vector<NamedTensor> Model::parameters() {
  std::vector<NamedTensor> out;
  for (auto& nt : named_tensors())
    if (nt.trainable) out.push_back(nt);
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (auto& nt : parameters()) n += nt.tensor.size();
  return n;
}

void Model::describe_csv(std::ostream& os) {
  os << "name,shape,param_count\n";
  for (auto& nt : named_tensors()) {
    os << nt.name << "," << shape_to_string(nt.tensor.shape()) << ","
       << (nt.trainable ? nt.tensor.size() : 0) << "\n";
  }
}

void Model::save(const std::string& path) {
  const json meta{{"arch", arch_tag()}, {"config", json::parse(config_json())}};
  save_checkpoint(path, named_tensors(), meta.dump());
}

void Model::load_from(const Checkpoint& ck) {
  for (auto& nt : named_tensors()) {
    auto it = ck.tensors.find(nt.name);
    if (it == ck.tensors.end())
      throw std::runtime_error("checkpoint missing tensor: " + nt.name);
    if (it->second.shape() != nt.tensor.shape())
      throw std::runtime_error("checkpoint shape mismatch for " + nt.name);
    nt.tensor.data() = it->second.data();
  }
}

std::unique_ptr<Model> build_unet(const UNetConfig& cfg, Rng& init_rng) {
  return std::make_unique<UNetModel>(cfg, init_rng);
}

std::unique_ptr<Model> build_encoder_regressor(const RegressorConfig& cfg, Rng& init_rng) {
  return std::make_unique<EncoderRegressorModel>(cfg, init_rng);
}

std::unique_ptr<Model> build_vgg_regressor(const VGGConfig& cfg, Rng& init_rng) {
  return std::make_unique<VGGRegressorModel>(cfg, init_rng);
}

void transfer_encoder_weights(Model& src_unet, Model& dst_regressor) {
  std::map<std::string, Tensor> src;
  for (auto& nt : src_unet.named_tensors()) src.emplace(nt.name, nt.tensor);
  bool any = false;
  for (auto& nt : dst_regressor.named_tensors()) {
    if (nt.name.rfind("enc", 0) != 0 && nt.name.rfind("bottleneck", 0) != 0) continue;
    auto it = src.find(nt.name);
    if (it == src.end() || it->second.shape() != nt.tensor.shape())
      throw std::invalid_argument("encoder config mismatch at tensor: " + nt.name);
    nt.tensor.data() = it->second.data();
    any = true;
  }
  if (!any) throw std::invalid_argument("transfer: destination has no encoder tensors");
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck) {
  const json meta = json::parse(ck.meta_json);
  const std::string arch = meta.at("arch");
  const json& c = meta.at("config");
  Rng rng(0);
  std::unique_ptr<Model> m;
  if (arch == "SB") {
    UNetConfig cfg;
    cfg.in_channels = c.at("in_channels");
    cfg.base_channels = c.at("base_channels");
    cfg.depth = c.at("depth");
    cfg.dropout_p = c.at("dropout_p");
    m = build_unet(cfg, rng);
  } else if (arch == "DE") {
    RegressorConfig cfg;
    const json& e = c.at("encoder");
    cfg.encoder.in_channels = e.at("in_channels");
    cfg.encoder.base_channels = e.at("base_channels");
    cfg.encoder.depth = e.at("depth");
    cfg.encoder.dropout_p = e.at("dropout_p");
    cfg.input_height = c.at("input_height");
    cfg.input_width = c.at("input_width");
    cfg.fc_nodes = c.at("fc_nodes");
    cfg.fc_layers = c.at("fc_layers");
    cfg.output_dim = c.at("output_dim");
    m = build_encoder_regressor(cfg, rng);
  } else if (arch == "VGG") {
    VGGConfig cfg;
    cfg.in_channels = c.at("in_channels");
    cfg.input_height = c.at("input_height");
    cfg.input_width = c.at("input_width");
    for (std::size_t i = 0; i < 5; ++i) {
      cfg.stage_widths[i] = c.at("stage_widths").at(i);
      cfg.stage_convs[i] = c.at("stage_convs").at(i);
    }
    cfg.fc_nodes = c.at("fc_nodes");
    cfg.fc_layers = c.at("fc_layers");
    m = build_vgg_regressor(cfg, rng);
  } else {
    throw std::runtime_error("checkpoint: unknown architecture tag " + arch);
  }
  m->load_from(ck);
  return m;
}

BinaryMask predict_mask(Model& sb_model, const GrayImage& image, double threshold) {
  GrayImage norm = preprocess::normalize_intensity(image);
  Tensor x = Tensor::from_data({1, 1, norm.height, norm.width}, norm.pix);
  Rng rng(0);
  Tensor y = sb_model.forward(x, Mode::Eval, rng);
  BinaryMask mask(image.height, image.width, image.sy, image.sx);
  for (std::size_t i = 0; i < y.size(); ++i) mask.bits[i] = y.data()[i] > threshold ? 1 : 0;
  return mask;
}

double predict_length_px(Model& regressor, const GrayImage& image) {
  GrayImage norm = preprocess::normalize_intensity(image);
  Tensor x = Tensor::from_data({1, 1, norm.height, norm.width}, norm.pix);
  Rng rng(0);
  Tensor y = regressor.forward(x, Mode::Eval, rng);
  return y.data()[0];
}

}  // namespace models
}  // namespace slm
