#pragma once

// The CSI feedback autoencoder: a learned convolutional encoder (or a frozen
// random-projection encoder for the compressed-sensing variant) producing an
// M-dimensional codeword, and a decoder that expands the codeword and refines
// it through residual units.

#include <cstdint>
#include <string>
#include <vector>

#include "csinet/checkpoint.hpp"
#include "csinet/nn_ops.hpp"
#include "csinet/tensor.hpp"

namespace csinet::model {

struct LoadedModel;

struct CsiNetConfig {
    int n_delay = 32;  // input rows (delay bins, or subcarriers for spatial-domain runs)
    int n_tx = 32;     // input columns (antennas)
    int codeword_dim = 512;  // M
    int refinenet_units = 2;
    bool relu_after_add = true;   // refine unit: activation after the shortcut add
    bool encoder_bn_relu = true;  // batchnorm+ReLU between the encoder conv and the flatten
    bool cs_encoder = false;      // frozen Gaussian projection instead of the learned encoder
    std::uint64_t sensing_seed = 0;     // seed of the frozen projection (cs_encoder only)
    std::string input_domain = "angular";  // angular | spatial (report bookkeeping)

    int input_dim() const { return 2 * n_delay * n_tx; }
    double gamma() const { return static_cast<double>(codeword_dim) / input_dim(); }

    void validate() const;  // throws ConfigError naming the offending field
    std::string to_json() const;
    static CsiNetConfig from_json(const std::string& text);
};

struct ConvLayer {
    nn::ConvSpec spec;
    nn::Param w, b;
};

struct BnLayer {
    nn::Param gamma, beta;
    Tensor running_mean, running_var;
};

struct RefineUnit {
    ConvLayer conv1, conv2, conv3;  // 2->8, 8->16, 16->2 feature maps
    BnLayer bn1, bn2, bn3;
};

class CsiNet {
public:
    CsiNet(const CsiNetConfig& cfg, std::uint64_t init_seed);

    const CsiNetConfig& config() const { return cfg_; }

    // Inference-mode passes (batchnorm uses running statistics).
    Tensor encode(const Tensor& x) const;     // [B,2,H,W] -> [B,M]
    Tensor decode(const Tensor& s) const;     // [B,M] -> [B,2,H,W], sigmoid range
    Tensor reconstruct(const Tensor& x) const;  // decode(encode(x))

    // Train-mode forward + backward on one batch (target = input). Fills
    // every parameter's gradient; does not take an optimizer step.
    float compute_loss_and_grads(const Tensor& batch);
    // compute_loss_and_grads followed by one ADAM update per parameter.
    float train_step(const Tensor& batch, const nn::AdamConfig& adam);
    // Mean per-sample reconstruction MSE in inference mode.
    double eval_loss(const Tensor& batch) const;

    std::vector<nn::Param*> parameters();
    std::vector<const nn::Param*> parameters() const;
    std::int64_t parameter_count() const;

    // Snapshot/restore of everything training mutates (parameter values and
    // batchnorm running statistics) for best-on-validation selection.
    std::vector<Tensor> snapshot_state() const;
    void restore_state(const std::vector<Tensor>& state);

    // Checkpoints carry the config (JSON line with the normalization
    // constants) plus all parameter tensors and running stats. Optimizer
    // moments are included only when requested (needed to resume training).
    ckpt::Checkpoint to_checkpoint(double norm_lo, double norm_hi,
                                   bool include_optimizer = false) const;
    static LoadedModel from_checkpoint(const ckpt::Checkpoint& c);

private:
    friend struct ModelAccess;  // test hook

    CsiNetConfig cfg_;
    // encoder (learned variant)
    ConvLayer enc_conv_;
    BnLayer enc_bn_;
    nn::Param enc_dense_w_, enc_dense_b_;
    // encoder (compressed-sensing variant): frozen, never trained
    Tensor sensing_;
    // decoder
    nn::Param dec_dense_w_, dec_dense_b_;
    std::vector<RefineUnit> units_;
    ConvLayer final_conv_;

    struct Cache;
    float forward_backward(const Tensor& batch, bool do_backward);
    Tensor forward_infer(const Tensor& x) const;
};

// A model restored from a checkpoint, together with the normalization
// constants of the dataset it was trained on.
struct LoadedModel {
    CsiNet net;
    double norm_lo = 0.0;
    double norm_hi = 0.0;
};

// Closed-form parameter count for the configuration; the implementation's
// parameter_count() must agree (asserted in tests so refactors cannot
// silently change the architecture).
std::int64_t expected_parameter_count(const CsiNetConfig& cfg);

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainHyper {
    int epochs = 200;
    int batch_size = 200;
    float lr = 1e-3f;
    std::uint64_t shuffle_seed = 0;
    // Epoch numbering starts here; a run resumed from a checkpoint passes the
    // next epoch index so the per-epoch shuffle streams line up with an
    // uninterrupted run.
    int first_epoch = 1;
    // Restore the best-validation parameters after the last epoch. Turn off
    // to keep the end-of-training state (needed when checkpointing to resume).
    bool restore_best = true;
};

struct EpochRecord {
    int epoch = 0;          // 1-based
    double train_loss = 0;  // mean per-sample MSE over the epoch's batches
    double val_loss = 0;    // inference-mode MSE on the validation split
    double best_val_so_far = 0;  // monotone envelope of val_loss
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = 0;  // epoch whose parameters the model ends up holding
    double best_val_loss = 0;
};

// Shuffled mini-batch training with ADAM; after the final epoch the model is
// restored to the parameters of the best validation epoch. Throws
// TrainingError (with the epoch index) if the loss turns non-finite.
// Trailing batches smaller than two samples are skipped (batchnorm needs
// batch statistics).
TrainResult train_model(CsiNet& net, const Tensor& train_x, const Tensor& val_x,
                        const TrainHyper& hyper);

// Convenience wrappers for model files.
void save_model(const std::string& path, const CsiNet& net, double norm_lo, double norm_hi,
                bool include_optimizer = false);
LoadedModel load_model(const std::string& path);

}  // namespace csinet::model
