#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "modrec/errors.hpp"
#include "modrec/layers.hpp"

namespace modrec {

// Immutable layer stack. Shape chaining is validated when the model is built,
// so a successful build guarantees forward cannot hit a geometry mismatch.
template <typename T>
class Model {
  public:
    Model(std::string name, Shape input_shape, int n_classes,
          std::vector<std::unique_ptr<Layer<T>>> layers)
        : name_(std::move(name)),
          input_shape_(std::move(input_shape)),
          n_classes_(n_classes),
          layers_(std::move(layers)) {
        Shape s = input_shape_;
        for (const auto& l : layers_) s = l->output_shape(s);
        if (s.size() != 1 || s[0] != n_classes_)
            throw ShapeError("model head produces " + shape_str(s) + ", expected (" +
                             std::to_string(n_classes_) + ")");
        for (auto& l : layers_) l->collect_params(params_);
        for (std::size_t i = 0; i < params_.size(); ++i)
            params_[i]->index = static_cast<int>(i);
    }

    const std::string& name() const { return name_; }
    const Shape& input_shape() const { return input_shape_; }
    int n_classes() const { return n_classes_; }
    const std::vector<Parameter<T>*>& params() const { return params_; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const Parameter<T>* p : params_) n += p->value.numel();
        return n;
    }

    // single-sample logits; pass a tape to record state for backward
    Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const {
        if (x.shape() != input_shape_)
            throw ShapeError("model " + name_ + " expects input " + shape_str(input_shape_) +
                             ", got " + shape_str(x.shape()));
        Tensor<T> cur = x;
        if (tape) {
            tape->ctxs.clear();
            tape->ctxs.reserve(layers_.size());
            tape->consumed = false;
            for (const auto& l : layers_) {
                CtxPtr<T> ctx;
                cur = l->forward(cur, &ctx);
                tape->ctxs.push_back(std::move(ctx));
            }
        } else {
            for (const auto& l : layers_) cur = l->forward(cur, nullptr);
        }
        return cur;
    }

    // consumes the tape; a second backward on the same tape is rejected
    Tensor<T> backward(Tape<T>& tape, const Tensor<T>& grad_logits, GradAccum<T>& accum) const {
        if (tape.consumed)
            throw ShapeError("tape already consumed; run forward again before backward");
        if (tape.ctxs.size() != layers_.size())
            throw ShapeError("tape does not belong to this model");
        tape.consumed = true;
        Tensor<T> g = grad_logits;
        for (std::size_t i = layers_.size(); i-- > 0;)
            g = layers_[i]->backward(*tape.ctxs[i], g, accum);
        return g;
    }

    // value snapshot, used for min-test-loss checkpointing
    std::vector<Tensor<T>> snapshot() const {
        std::vector<Tensor<T>> v;
        v.reserve(params_.size());
        for (const Parameter<T>* p : params_) v.push_back(p->value);
        return v;
    }

    void restore(const std::vector<Tensor<T>>& snap) {
        if (snap.size() != params_.size())
            throw ShapeError("snapshot size does not match parameter list");
        for (std::size_t i = 0; i < snap.size(); ++i) params_[i]->value = snap[i];
    }

  private:
    std::string name_;
    Shape input_shape_;
    int n_classes_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<Parameter<T>*> params_;
};

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

struct Conv5Widths {
    int c1 = 64, c2 = 64, c3 = 128, c4 = 128, c5 = 256;
    std::vector<int> as_vector() const { return {c1, c2, c3, c4, c5}; }
};

// Five conv(k=3, stride=1, pad=1) + ReLU + halving maxpool stages over the
// time axis, then a dense head. N must be divisible by 2^5.
template <typename T>
Model<T> build_conv5(int n_samples, int n_classes, Conv5Widths widths = {},
                     std::uint64_t seed = 1) {
    if (n_samples % 32 != 0)
        throw ShapeError("conv5 needs N divisible by 32, got N=" + std::to_string(n_samples));
    Rng rng(mix_seed(seed, 0xC0745ULL));
    std::vector<std::unique_ptr<Layer<T>>> layers;
    const std::vector<int> w = widths.as_vector();
    int c_in = 2;
    for (std::size_t i = 0; i < w.size(); ++i) {
        layers.push_back(std::make_unique<Conv1dLayer<T>>("conv" + std::to_string(i + 1), c_in,
                                                          w[i], 3, 1, 1, rng));
        layers.push_back(std::make_unique<ReluLayer<T>>());
        layers.push_back(std::make_unique<MaxPool1dLayer<T>>(2));
        c_in = w[i];
    }
    layers.push_back(std::make_unique<FlattenLayer<T>>());
    layers.push_back(std::make_unique<DenseLayer<T>>("head", c_in * (n_samples / 32), n_classes, rng));
    return Model<T>("conv5", {2, n_samples}, n_classes, std::move(layers));
}

// analytic parameter count for conv5: sum(c_in*c_out*3 + c_out) + dense head
inline std::size_t conv5_param_count(int n_samples, int n_classes, Conv5Widths widths = {}) {
    std::size_t total = 0;
    int c_in = 2;
    for (int c_out : widths.as_vector()) {
        total += static_cast<std::size_t>(c_in) * c_out * 3 + c_out;
        c_in = c_out;
    }
    const std::size_t d_in = static_cast<std::size_t>(c_in) * (n_samples / 32);
    total += d_in * n_classes + n_classes;
    return total;
}

struct ImageCnnWidths {
    int s1 = 16, s2 = 32, s3 = 64;
};

namespace detail {

template <typename T>
void append_image_cnn_stages(std::vector<std::unique_ptr<Layer<T>>>& layers, int in_channels,
                             ImageCnnWidths widths, Rng& rng) {
    const int stage_w[3] = {widths.s1, widths.s2, widths.s3};
    int c_in = in_channels;
    for (int s = 0; s < 3; ++s) {
        const std::string prefix = "stage" + std::to_string(s + 1);
        if (s > 0) layers.push_back(std::make_unique<AvgPool2dLayer<T>>(2, 2));
        layers.push_back(
            std::make_unique<Conv2dLayer<T>>(prefix + ".stem", c_in, stage_w[s], 3, 3, 1, 1, rng));
        layers.push_back(std::make_unique<ReluLayer<T>>());
        layers.push_back(std::make_unique<ResidualBlock<T>>(prefix + ".block1", stage_w[s], rng));
        layers.push_back(std::make_unique<ResidualBlock<T>>(prefix + ".block2", stage_w[s], rng));
        c_in = stage_w[s];
    }
    layers.push_back(std::make_unique<GlobalAvgPoolLayer<T>>());
}

}  // namespace detail

// Compact residual image classifier for (2,W,W) inputs: three stages of two
// pre-activation residual blocks, global average pool, dense head.
template <typename T>
Model<T> build_image_cnn(int image_size, int n_classes, ImageCnnWidths widths = {},
                         std::uint64_t seed = 1) {
    if (image_size != 28 && image_size != 32 && image_size != 224 && image_size != 256)
        throw ShapeError("image cnn supports W in {28,32,224,256}, got W=" +
                         std::to_string(image_size));
    Rng rng(mix_seed(seed, 0x1C44ULL));
    std::vector<std::unique_ptr<Layer<T>>> layers;
    detail::append_image_cnn_stages(layers, 2, widths, rng);
    layers.push_back(std::make_unique<DenseLayer<T>>("head", widths.s3, n_classes, rng));
    return Model<T>("imagecnn", {2, image_size, image_size}, n_classes, std::move(layers));
}

// Learnable conv transform feeding the residual image classifier: raw (2,N)
// frames in, class logits out. F = N/4 filters yield square (2,F,F) images.
template <typename T>
Model<T> build_ct_image_cnn(int n_samples, int n_classes, ImageCnnWidths widths = {},
                            bool learnable_ct = true, std::uint64_t seed = 1) {
    if (n_samples % 4 != 0)
        throw ShapeError("conv transform needs N divisible by 4, got N=" +
                         std::to_string(n_samples));
    const int filters = n_samples / 4;
    Rng rng(mix_seed(seed, 0xC71ULL));
    std::vector<std::unique_ptr<Layer<T>>> layers;
    layers.push_back(std::make_unique<ConvTransformLayer<T>>("ct", filters, learnable_ct, rng));
    detail::append_image_cnn_stages(layers, 2, widths, rng);
    layers.push_back(std::make_unique<DenseLayer<T>>("head", widths.s3, n_classes, rng));
    return Model<T>("ct-imagecnn", {2, n_samples}, n_classes, std::move(layers));
}

// ---------------------------------------------------------------------------
// prediction
// ---------------------------------------------------------------------------

template <typename T>
struct Prediction {
    Tensor<T> logits;         // (B, K)
    std::vector<int> labels;  // argmax per row, ties toward the lowest index
};

template <typename T>
int argmax_row(const T* row, int k) {
    int best = 0;
    for (int c = 1; c < k; ++c)
        if (row[c] > row[best]) best = c;
    return best;
}

// batch (B, ...) stacked along the first axis
template <typename T>
Prediction<T> predict(const Model<T>& model, const Tensor<T>& batch) {
    if (batch.ndim() < 2)
        throw ShapeError("predict expects a batched tensor, got " + shape_str(batch.shape()));
    Shape sample_shape(batch.shape().begin() + 1, batch.shape().end());
    if (sample_shape != model.input_shape())
        throw ShapeError("batch geometry " + shape_str(sample_shape) + " does not match model input " +
                         shape_str(model.input_shape()));
    const int b = batch.dim(0);
    const int k = model.n_classes();
    const std::size_t sample_len = numel_of(sample_shape);
    Prediction<T> pred{Tensor<T>({b, k}), std::vector<int>(static_cast<std::size_t>(b))};
    for (int i = 0; i < b; ++i) {
        Tensor<T> x(sample_shape,
                    std::vector<T>(batch.data() + static_cast<std::size_t>(i) * sample_len,
                                   batch.data() + static_cast<std::size_t>(i + 1) * sample_len));
        Tensor<T> logits = model.forward(x, nullptr);
        std::copy(logits.data(), logits.data() + k, pred.logits.data() + pred.logits.idx2(i, 0));
        pred.labels[static_cast<std::size_t>(i)] = argmax_row(logits.data(), k);
    }
    return pred;
}

// ---------------------------------------------------------------------------
// checkpoint container: magic, version, then a named parameter table with
// f32 payloads, all little-endian
// ---------------------------------------------------------------------------

namespace ckpt {

constexpr char kMagic[8] = {'M', 'R', 'C', 'K', 'P', 'T', '0', '1'};

void save(const std::string& path, const std::vector<Parameter<float>*>& params);
void load_into(const std::string& path, const std::vector<Parameter<float>*>& params);

}  // namespace ckpt

}  // namespace modrec
