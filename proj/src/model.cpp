#include "csinet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include <json.hpp>

#include "csinet/baselines.hpp"
#include "csinet/errors.hpp"
#include "csinet/rng.hpp"

namespace csinet::model {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void CsiNetConfig::validate() const {
    if (n_delay < 1) throw ConfigError("n_delay must be >= 1");
    if (n_tx < 1) throw ConfigError("n_tx must be >= 1");
    if (codeword_dim < 1) throw ConfigError("codeword_dim must be >= 1");
    if (codeword_dim > input_dim())
        throw ConfigError("codeword_dim " + std::to_string(codeword_dim) +
                          " exceeds the input dimension " + std::to_string(input_dim()));
    if (refinenet_units < 0 || refinenet_units > 64)
        throw ConfigError("refinenet_units must be in [0, 64]");
    if (input_domain != "angular" && input_domain != "spatial")
        throw ConfigError("input_domain must be 'angular' or 'spatial', got '" + input_domain + "'");
}

std::string CsiNetConfig::to_json() const {
    json j;
    j["n_delay"] = n_delay;
    j["n_tx"] = n_tx;
    j["codeword_dim"] = codeword_dim;
    j["refinenet_units"] = refinenet_units;
    j["relu_after_add"] = relu_after_add;
    j["encoder_bn_relu"] = encoder_bn_relu;
    j["cs_encoder"] = cs_encoder;
    j["sensing_seed"] = sensing_seed;
    j["input_domain"] = input_domain;
    return j.dump();
}

CsiNetConfig CsiNetConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    static const char* known[] = {"n_delay",        "n_tx",        "codeword_dim",
                                  "refinenet_units", "relu_after_add", "encoder_bn_relu",
                                  "cs_encoder",     "sensing_seed", "input_domain"};
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        if (!ok) throw ConfigError("unknown model config key '" + item.key() + "'");
    }
    CsiNetConfig cfg;
    try {
        cfg.n_delay = j.value("n_delay", cfg.n_delay);
        cfg.n_tx = j.value("n_tx", cfg.n_tx);
        cfg.codeword_dim = j.value("codeword_dim", cfg.codeword_dim);
        cfg.refinenet_units = j.value("refinenet_units", cfg.refinenet_units);
        cfg.relu_after_add = j.value("relu_after_add", cfg.relu_after_add);
        cfg.encoder_bn_relu = j.value("encoder_bn_relu", cfg.encoder_bn_relu);
        cfg.cs_encoder = j.value("cs_encoder", cfg.cs_encoder);
        cfg.sensing_seed = j.value("sensing_seed", cfg.sensing_seed);
        cfg.input_domain = j.value("input_domain", cfg.input_domain);
    } catch (const json::type_error& e) {
        throw ConfigError(std::string("model config field has the wrong type: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Layer construction helpers
// ---------------------------------------------------------------------------

namespace {

ConvLayer make_conv(const std::string& name, int cin, int cout, Rng& rng) {
    ConvLayer l;
    l.spec.in_channels = cin;
    l.spec.out_channels = cout;
    l.w = nn::Param(name + ".w", nn::glorot_uniform({cout, cin, 3, 3}, cin * 9, cout * 9, rng));
    l.b = nn::Param(name + ".b", Tensor::zeros({cout}));
    return l;
}

BnLayer make_bn(const std::string& name, int channels) {
    BnLayer l;
    l.gamma = nn::Param(name + ".gamma", Tensor::full({channels}, 1.0f));
    l.beta = nn::Param(name + ".beta", Tensor::zeros({channels}));
    l.running_mean = Tensor::zeros({channels});
    l.running_var = Tensor::full({channels}, 1.0f);
    return l;
}

// The layer's base name ("refine1.bn2") recovered from its parameter names.
std::string bn_base_name(const BnLayer& l) {
    const std::string& g = l.gamma.name;
    return g.substr(0, g.size() - std::string(".gamma").size());
}

// batchnorm_forward works on a BatchNormState; assemble one from the layer,
// run, and (in train mode) write the updated running statistics back.
Tensor bn_apply(const Tensor& x, BnLayer& layer, nn::BnMode mode, nn::BnCache* cache) {
    nn::BatchNormState st(layer.gamma.value.dim(0));
    st.gamma = layer.gamma.value;
    st.beta = layer.beta.value;
    st.running_mean = layer.running_mean;
    st.running_var = layer.running_var;
    Tensor y = nn::batchnorm_forward(x, st, mode, cache);
    if (mode == nn::BnMode::train) {
        layer.running_mean = std::move(st.running_mean);
        layer.running_var = std::move(st.running_var);
    }
    return y;
}

Tensor bn_infer(const Tensor& x, const BnLayer& layer) {
    nn::BatchNormState st(layer.gamma.value.dim(0));
    st.gamma = layer.gamma.value;
    st.beta = layer.beta.value;
    st.running_mean = layer.running_mean;
    st.running_var = layer.running_var;
    return nn::batchnorm_forward(x, st, nn::BnMode::infer, nullptr);
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "shortcut add");
    Tensor out(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (std::int64_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

CsiNet::CsiNet(const CsiNetConfig& cfg, std::uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng = Rng::stream(init_seed, "model-init");
    const int n = cfg_.input_dim();
    const int m = cfg_.codeword_dim;

    if (cfg_.cs_encoder) {
        sensing_ = cs::make_sensing_matrix(m, n, cfg_.sensing_seed).a;
    } else {
        enc_conv_ = make_conv("encoder.conv", 2, 2, rng);
        if (cfg_.encoder_bn_relu) enc_bn_ = make_bn("encoder.bn", 2);
        enc_dense_w_ = nn::Param("encoder.dense.w", nn::glorot_uniform({m, n}, n, m, rng));
        enc_dense_b_ = nn::Param("encoder.dense.b", Tensor::zeros({m}));
    }

    dec_dense_w_ = nn::Param("decoder.dense.w", nn::glorot_uniform({n, m}, m, n, rng));
    dec_dense_b_ = nn::Param("decoder.dense.b", Tensor::zeros({n}));

    units_.reserve(static_cast<size_t>(cfg_.refinenet_units));
    for (int u = 0; u < cfg_.refinenet_units; ++u) {
        const std::string base = "refine" + std::to_string(u + 1);
        RefineUnit unit;
        unit.conv1 = make_conv(base + ".conv1", 2, 8, rng);
        unit.bn1 = make_bn(base + ".bn1", 8);
        unit.conv2 = make_conv(base + ".conv2", 8, 16, rng);
        unit.bn2 = make_bn(base + ".bn2", 16);
        unit.conv3 = make_conv(base + ".conv3", 16, 2, rng);
        unit.bn3 = make_bn(base + ".bn3", 2);
        units_.push_back(std::move(unit));
    }

    final_conv_ = make_conv("final.conv", 2, 2, rng);
}

namespace {

void check_input_shape(const Tensor& x, const CsiNetConfig& cfg, const char* what) {
    if (x.rank() != 4 || x.dim(1) != 2 || x.dim(2) != cfg.n_delay || x.dim(3) != cfg.n_tx)
        throw ShapeError(std::string(what) + ": expected [B,2," + std::to_string(cfg.n_delay) +
                         "," + std::to_string(cfg.n_tx) + "], got " + x.shape_str());
    if (x.dim(0) < 1) throw ShapeError(std::string(what) + ": empty batch");
}

}  // namespace

struct CsiNet::Cache {
    // encoder
    nn::BnCache enc_bn;
    Tensor enc_relu_in;  // batchnorm output, input to the encoder ReLU
    Tensor enc_flat;     // encoder dense input [B,N]
    Tensor codeword;     // [B,M], decoder dense input
    // decoder
    struct Unit {
        Tensor in;  // unit input, also the shortcut branch
        nn::BnCache b1, b2, b3;
        Tensor r1_in, r2_in;  // ReLU inputs inside the unit
        Tensor c2_in, c3_in;  // conv inputs (the ReLU outputs)
        Tensor act_in;        // input of the unit-final ReLU: the shortcut sum
                              // (relu_after_add) or the bn3 output (otherwise)
    };
    std::vector<Unit> units;
    Tensor final_in;  // last unit output, input of the output conv
    Tensor y;         // sigmoid output
};

float CsiNet::forward_backward(const Tensor& batch, bool do_backward) {
    check_input_shape(batch, cfg_, "train batch");
    const int b = batch.dim(0);
    const int n = cfg_.input_dim();

    Cache c;

    // --- encoder ---
    if (cfg_.cs_encoder) {
        c.codeword = nn::dense_forward(batch.reshaped({b, n}), sensing_,
                                       Tensor::zeros({cfg_.codeword_dim}));
    } else {
        Tensor t = nn::conv2d_forward_batch(batch, enc_conv_.spec, enc_conv_.w.value,
                                            enc_conv_.b.value);
        if (cfg_.encoder_bn_relu) {
            t = bn_apply(t, enc_bn_, nn::BnMode::train, &c.enc_bn);
            c.enc_relu_in = t;
            t = nn::relu(t);
        }
        c.enc_flat = t.reshaped({b, n});
        c.codeword = nn::dense_forward(c.enc_flat, enc_dense_w_.value, enc_dense_b_.value);
    }

    // --- decoder ---
    Tensor cur = nn::dense_forward(c.codeword, dec_dense_w_.value, dec_dense_b_.value)
                     .reshaped({b, 2, cfg_.n_delay, cfg_.n_tx});
    c.units.resize(units_.size());
    for (size_t u = 0; u < units_.size(); ++u) {
        RefineUnit& un = units_[u];
        Cache::Unit& uc = c.units[u];
        uc.in = cur;
        Tensor t = nn::conv2d_forward_batch(uc.in, un.conv1.spec, un.conv1.w.value, un.conv1.b.value);
        t = bn_apply(t, un.bn1, nn::BnMode::train, &uc.b1);
        uc.r1_in = t;
        t = nn::relu(t);
        uc.c2_in = t;
        t = nn::conv2d_forward_batch(t, un.conv2.spec, un.conv2.w.value, un.conv2.b.value);
        t = bn_apply(t, un.bn2, nn::BnMode::train, &uc.b2);
        uc.r2_in = t;
        t = nn::relu(t);
        uc.c3_in = t;
        t = nn::conv2d_forward_batch(t, un.conv3.spec, un.conv3.w.value, un.conv3.b.value);
        t = bn_apply(t, un.bn3, nn::BnMode::train, &uc.b3);
        if (cfg_.relu_after_add) {
            uc.act_in = add(uc.in, t);
            cur = nn::relu(uc.act_in);
        } else {
            uc.act_in = t;
            cur = add(uc.in, nn::relu(t));
        }
    }
    c.final_in = cur;
    Tensor f = nn::conv2d_forward_batch(cur, final_conv_.spec, final_conv_.w.value,
                                        final_conv_.b.value);
    c.y = nn::sigmoid(f);

    Tensor grad_loss;
    const float loss = nn::mse_loss(c.y, batch, do_backward ? &grad_loss : nullptr);
    if (!do_backward) return loss;

    // --- backward ---
    Tensor g = nn::sigmoid_backward(grad_loss, c.y);
    {
        auto fg = nn::conv2d_backward_batch(g, c.final_in, final_conv_.spec, final_conv_.w.value);
        final_conv_.w.grad = std::move(fg.weights);
        final_conv_.b.grad = std::move(fg.bias);
        g = std::move(fg.input);
    }
    for (size_t ru = units_.size(); ru-- > 0;) {
        RefineUnit& un = units_[ru];
        Cache::Unit& uc = c.units[ru];
        Tensor g_shortcut, g_branch;
        if (cfg_.relu_after_add) {
            g_shortcut = nn::relu_backward(g, uc.act_in);
            g_branch = g_shortcut;
        } else {
            g_shortcut = g;
            g_branch = nn::relu_backward(g, uc.act_in);
        }
        auto b3g = nn::batchnorm_backward(g_branch, uc.b3);
        un.bn3.gamma.grad = std::move(b3g.gamma);
        un.bn3.beta.grad = std::move(b3g.beta);
        auto c3g = nn::conv2d_backward_batch(b3g.input, uc.c3_in, un.conv3.spec, un.conv3.w.value);
        un.conv3.w.grad = std::move(c3g.weights);
        un.conv3.b.grad = std::move(c3g.bias);

        Tensor t = nn::relu_backward(c3g.input, uc.r2_in);
        auto b2g = nn::batchnorm_backward(t, uc.b2);
        un.bn2.gamma.grad = std::move(b2g.gamma);
        un.bn2.beta.grad = std::move(b2g.beta);
        auto c2g = nn::conv2d_backward_batch(b2g.input, uc.c2_in, un.conv2.spec, un.conv2.w.value);
        un.conv2.w.grad = std::move(c2g.weights);
        un.conv2.b.grad = std::move(c2g.bias);

        t = nn::relu_backward(c2g.input, uc.r1_in);
        auto b1g = nn::batchnorm_backward(t, uc.b1);
        un.bn1.gamma.grad = std::move(b1g.gamma);
        un.bn1.beta.grad = std::move(b1g.beta);
        auto c1g = nn::conv2d_backward_batch(b1g.input, uc.in, un.conv1.spec, un.conv1.w.value);
        un.conv1.w.grad = std::move(c1g.weights);
        un.conv1.b.grad = std::move(c1g.bias);

        g = add(g_shortcut, c1g.input);
    }
    {
        auto dg = nn::dense_backward(g.reshaped({b, n}), c.codeword, dec_dense_w_.value);
        dec_dense_w_.grad = std::move(dg.weights);
        dec_dense_b_.grad = std::move(dg.bias);
        g = std::move(dg.input);  // [B, M]
    }
    if (!cfg_.cs_encoder) {
        auto eg = nn::dense_backward(g, c.enc_flat, enc_dense_w_.value);
        enc_dense_w_.grad = std::move(eg.weights);
        enc_dense_b_.grad = std::move(eg.bias);
        Tensor ge = eg.input.reshaped({b, 2, cfg_.n_delay, cfg_.n_tx});
        if (cfg_.encoder_bn_relu) {
            ge = nn::relu_backward(ge, c.enc_relu_in);
            auto bg = nn::batchnorm_backward(ge, c.enc_bn);
            enc_bn_.gamma.grad = std::move(bg.gamma);
            enc_bn_.beta.grad = std::move(bg.beta);
            ge = std::move(bg.input);
        }
        auto cg = nn::conv2d_backward_batch(ge, batch, enc_conv_.spec, enc_conv_.w.value);
        enc_conv_.w.grad = std::move(cg.weights);
        enc_conv_.b.grad = std::move(cg.bias);
    }
    return loss;
}

float CsiNet::compute_loss_and_grads(const Tensor& batch) { return forward_backward(batch, true); }

float CsiNet::train_step(const Tensor& batch, const nn::AdamConfig& adam) {
    const float loss = forward_backward(batch, true);
    for (nn::Param* p : parameters()) nn::adam_update(*p, adam);
    return loss;
}

Tensor CsiNet::encode(const Tensor& x) const {
    check_input_shape(x, cfg_, "encode input");
    const int b = x.dim(0);
    const int n = cfg_.input_dim();
    if (cfg_.cs_encoder)
        return nn::dense_forward(x.reshaped({b, n}), sensing_, Tensor::zeros({cfg_.codeword_dim}));
    Tensor t = nn::conv2d_forward_batch(x, enc_conv_.spec, enc_conv_.w.value, enc_conv_.b.value);
    if (cfg_.encoder_bn_relu) t = nn::relu(bn_infer(t, enc_bn_));
    return nn::dense_forward(t.reshaped({b, n}), enc_dense_w_.value, enc_dense_b_.value);
}

Tensor CsiNet::decode(const Tensor& s) const {
    if (s.rank() != 2 || s.dim(1) != cfg_.codeword_dim)
        throw ShapeError("decode input: expected [B," + std::to_string(cfg_.codeword_dim) +
                         "], got " + s.shape_str());
    const int b = s.dim(0);
    Tensor cur = nn::dense_forward(s, dec_dense_w_.value, dec_dense_b_.value)
                     .reshaped({b, 2, cfg_.n_delay, cfg_.n_tx});
    for (const RefineUnit& un : units_) {
        Tensor t = nn::conv2d_forward_batch(cur, un.conv1.spec, un.conv1.w.value, un.conv1.b.value);
        t = nn::relu(bn_infer(t, un.bn1));
        t = nn::conv2d_forward_batch(t, un.conv2.spec, un.conv2.w.value, un.conv2.b.value);
        t = nn::relu(bn_infer(t, un.bn2));
        t = nn::conv2d_forward_batch(t, un.conv3.spec, un.conv3.w.value, un.conv3.b.value);
        t = bn_infer(t, un.bn3);
        cur = cfg_.relu_after_add ? nn::relu(add(cur, t)) : add(cur, nn::relu(t));
    }
    Tensor f = nn::conv2d_forward_batch(cur, final_conv_.spec, final_conv_.w.value,
                                        final_conv_.b.value);
    return nn::sigmoid(f);
}

Tensor CsiNet::reconstruct(const Tensor& x) const { return decode(encode(x)); }

double CsiNet::eval_loss(const Tensor& batch) const {
    check_input_shape(batch, cfg_, "eval batch");
    const int total = batch.dim(0);
    const std::int64_t per_sample = batch.numel() / total;
    constexpr int kChunk = 256;  // bounds the working set on large splits
    double sum = 0.0;
    for (int start = 0; start < total; start += kChunk) {
        const int b = std::min(kChunk, total - start);
        Tensor chunk({b, 2, cfg_.n_delay, cfg_.n_tx});
        std::memcpy(chunk.data(), batch.data() + start * per_sample,
                    static_cast<size_t>(b) * per_sample * sizeof(float));
        const Tensor y = reconstruct(chunk);
        sum += static_cast<double>(nn::mse_loss(y, chunk, nullptr)) * b;
    }
    return sum / total;
}

std::vector<nn::Param*> CsiNet::parameters() {
    std::vector<nn::Param*> ps;
    if (!cfg_.cs_encoder) {
        ps.push_back(&enc_conv_.w);
        ps.push_back(&enc_conv_.b);
        if (cfg_.encoder_bn_relu) {
            ps.push_back(&enc_bn_.gamma);
            ps.push_back(&enc_bn_.beta);
        }
        ps.push_back(&enc_dense_w_);
        ps.push_back(&enc_dense_b_);
    }
    ps.push_back(&dec_dense_w_);
    ps.push_back(&dec_dense_b_);
    for (RefineUnit& un : units_) {
        for (ConvLayer* cl : {&un.conv1, &un.conv2, &un.conv3}) {
            ps.push_back(&cl->w);
            ps.push_back(&cl->b);
        }
        for (BnLayer* bl : {&un.bn1, &un.bn2, &un.bn3}) {
            ps.push_back(&bl->gamma);
            ps.push_back(&bl->beta);
        }
    }
    ps.push_back(&final_conv_.w);
    ps.push_back(&final_conv_.b);
    return ps;
}

std::vector<const nn::Param*> CsiNet::parameters() const {
    auto mut = const_cast<CsiNet*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

std::int64_t CsiNet::parameter_count() const {
    std::int64_t total = 0;
    for (const nn::Param* p : parameters()) total += p->value.numel();
    return total;
}

std::int64_t expected_parameter_count(const CsiNetConfig& cfg) {
    const auto conv = [](std::int64_t ci, std::int64_t co) { return co * ci * 9 + co; };
    const auto bn = [](std::int64_t c) { return 2 * c; };
    const auto dense = [](std::int64_t in, std::int64_t out) { return out * in + out; };
    const std::int64_t n = cfg.input_dim();
    const std::int64_t m = cfg.codeword_dim;
    std::int64_t total = 0;
    if (!cfg.cs_encoder) {
        total += conv(2, 2);
        if (cfg.encoder_bn_relu) total += bn(2);
        total += dense(n, m);
    }
    total += dense(m, n);
    total += cfg.refinenet_units * (conv(2, 8) + bn(8) + conv(8, 16) + bn(16) + conv(16, 2) + bn(2));
    total += conv(2, 2);
    return total;
}

// ---------------------------------------------------------------------------
// State snapshot / checkpoints
// ---------------------------------------------------------------------------

// Enumerates the model's batchnorm layers in a fixed order; shared by the
// state snapshot, the checkpoint writer/reader, and tests.
struct ModelAccess {
    static std::vector<BnLayer*> bn_layers(CsiNet& net) {
        std::vector<BnLayer*> ls;
        if (!net.cfg_.cs_encoder && net.cfg_.encoder_bn_relu) ls.push_back(&net.enc_bn_);
        for (RefineUnit& un : net.units_) {
            ls.push_back(&un.bn1);
            ls.push_back(&un.bn2);
            ls.push_back(&un.bn3);
        }
        return ls;
    }
    static std::vector<const BnLayer*> bn_layers(const CsiNet& net) {
        auto mut = bn_layers(const_cast<CsiNet&>(net));
        return {mut.begin(), mut.end()};
    }
};

std::vector<Tensor> CsiNet::snapshot_state() const {
    std::vector<Tensor> state;
    for (const nn::Param* p : parameters()) state.push_back(p->value);
    for (const BnLayer* l : ModelAccess::bn_layers(*this)) {
        state.push_back(l->running_mean);
        state.push_back(l->running_var);
    }
    return state;
}

void CsiNet::restore_state(const std::vector<Tensor>& state) {
    auto ps = parameters();
    auto bns = ModelAccess::bn_layers(*this);
    if (state.size() != ps.size() + 2 * bns.size())
        throw UsageError("restore_state: snapshot has " + std::to_string(state.size()) +
                         " tensors, model needs " + std::to_string(ps.size() + 2 * bns.size()));
    size_t i = 0;
    for (nn::Param* p : ps) {
        require_same_shape(p->value, state[i], "restore_state");
        p->value = state[i++];
    }
    for (BnLayer* l : bns) {
        require_same_shape(l->running_mean, state[i], "restore_state");
        l->running_mean = state[i++];
        require_same_shape(l->running_var, state[i], "restore_state");
        l->running_var = state[i++];
    }
}

ckpt::Checkpoint CsiNet::to_checkpoint(double norm_lo, double norm_hi,
                                       bool include_optimizer) const {
    ckpt::Checkpoint c;
    json j = json::parse(cfg_.to_json());
    j["norm_lo"] = norm_lo;
    j["norm_hi"] = norm_hi;
    c.config_text = j.dump();
    for (const nn::Param* p : parameters()) {
        c.tensors.push_back({p->name, p->value});
        if (include_optimizer) {
            c.tensors.push_back({p->name + ".adam_m", p->adam_m});
            c.tensors.push_back({p->name + ".adam_v", p->adam_v});
            c.tensors.push_back(
                {p->name + ".adam_t", Tensor({1}, {static_cast<float>(p->step_count)})});
        }
    }
    for (const BnLayer* l : ModelAccess::bn_layers(*this)) {
        const std::string base = bn_base_name(*l);
        c.tensors.push_back({base + ".running_mean", l->running_mean});
        c.tensors.push_back({base + ".running_var", l->running_var});
    }
    return c;
}

LoadedModel CsiNet::from_checkpoint(const ckpt::Checkpoint& c) {
    if (c.config_text.empty()) throw DataError("checkpoint has no config line");
    json j;
    try {
        j = json::parse(c.config_text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("checkpoint config is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("norm_lo") || !j.contains("norm_hi"))
        throw DataError("checkpoint config lacks the normalization constants");
    const double norm_lo = j.at("norm_lo").get<double>();
    const double norm_hi = j.at("norm_hi").get<double>();
    j.erase("norm_lo");
    j.erase("norm_hi");
    const CsiNetConfig cfg = CsiNetConfig::from_json(j.dump());

    LoadedModel out{CsiNet(cfg, 0), norm_lo, norm_hi};
    CsiNet& net = out.net;

    const auto fetch = [&c](const std::string& name) -> const Tensor& {
        const Tensor* t = c.find(name);
        if (!t) throw DataError("checkpoint is missing tensor '" + name + "'");
        return *t;
    };
    auto ps = net.parameters();
    const bool with_opt = !ps.empty() && c.find(ps.front()->name + ".adam_m") != nullptr;
    for (nn::Param* p : ps) {
        const Tensor& v = fetch(p->name);
        require_same_shape(p->value, v, p->name.c_str());
        p->value = v;
        if (with_opt) {
            const Tensor& m = fetch(p->name + ".adam_m");
            const Tensor& vv = fetch(p->name + ".adam_v");
            const Tensor& t = fetch(p->name + ".adam_t");
            require_same_shape(p->adam_m, m, p->name.c_str());
            require_same_shape(p->adam_v, vv, p->name.c_str());
            p->adam_m = m;
            p->adam_v = vv;
            p->step_count = static_cast<std::int64_t>(t[0]);
        }
    }
    for (BnLayer* l : ModelAccess::bn_layers(net)) {
        const std::string base = bn_base_name(*l);
        const Tensor& mean = fetch(base + ".running_mean");
        const Tensor& var = fetch(base + ".running_var");
        require_same_shape(l->running_mean, mean, base.c_str());
        require_same_shape(l->running_var, var, base.c_str());
        l->running_mean = mean;
        l->running_var = var;
    }
    return out;
}

void save_model(const std::string& path, const CsiNet& net, double norm_lo, double norm_hi,
                bool include_optimizer) {
    ckpt::write_checkpoint(path, net.to_checkpoint(norm_lo, norm_hi, include_optimizer));
}

LoadedModel load_model(const std::string& path) {
    return CsiNet::from_checkpoint(ckpt::read_checkpoint(path));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

TrainResult train_model(CsiNet& net, const Tensor& train_x, const Tensor& val_x,
                        const TrainHyper& hyper) {
    check_input_shape(train_x, net.config(), "training split");
    check_input_shape(val_x, net.config(), "validation split");
    if (hyper.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (hyper.batch_size < 2) throw ConfigError("batch_size must be >= 2 (batchnorm)");
    if (hyper.first_epoch < 1) throw ConfigError("first_epoch must be >= 1");
    const int n_train = train_x.dim(0);
    if (n_train < 2) throw ConfigError("need at least 2 training samples");

    const std::int64_t per_sample = train_x.numel() / n_train;
    nn::AdamConfig adam;
    adam.lr = hyper.lr;

    TrainResult res;
    res.best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_state = net.snapshot_state();

    std::vector<int> order(static_cast<size_t>(n_train));

    const int last_epoch = hyper.first_epoch + hyper.epochs - 1;
    for (int epoch = hyper.first_epoch; epoch <= last_epoch; ++epoch) {
        // Each epoch's batch composition is a pure function of (seed, epoch),
        // so a resumed run shuffles exactly like an uninterrupted one.
        std::iota(order.begin(), order.end(), 0);
        Rng rng = Rng::stream(hyper.shuffle_seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch));
        for (int i = n_train - 1; i > 0; --i) {
            const auto k = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(k)]);
        }

        double loss_sum = 0.0;
        int counted = 0;
        try {
            for (int start = 0; start < n_train; start += hyper.batch_size) {
                const int b = std::min(hyper.batch_size, n_train - start);
                if (b < 2) continue;  // too small for batch statistics
                Tensor batch({b, 2, net.config().n_delay, net.config().n_tx});
                for (int i = 0; i < b; ++i)
                    std::memcpy(batch.data() + i * per_sample,
                                train_x.data() + order[static_cast<size_t>(start + i)] * per_sample,
                                static_cast<size_t>(per_sample) * sizeof(float));
                const float loss = net.train_step(batch, adam);
                if (!std::isfinite(loss))
                    throw TrainingError("non-finite training loss");
                loss_sum += static_cast<double>(loss) * b;
                counted += b;
            }
        } catch (const TrainingError& e) {
            throw TrainingError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
        const double train_loss = loss_sum / counted;
        const double val_loss = net.eval_loss(val_x);
        if (!std::isfinite(val_loss))
            throw TrainingError("epoch " + std::to_string(epoch) + ": non-finite validation loss");

        if (val_loss < res.best_val_loss) {
            res.best_val_loss = val_loss;
            res.best_epoch = epoch;
            best_state = net.snapshot_state();
        }
        res.history.push_back({epoch, train_loss, val_loss, res.best_val_loss});
    }

    if (hyper.restore_best) net.restore_state(best_state);
    return res;
}

}  // namespace csinet::model
