#pragma once

#include "hetlab/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hetlab::fl {

enum class ModelKind { Mlp, CnnMin };
enum class Activation { Relu, Softmax };
enum class Pooling { Flatten, GlobalAverage };

struct DenseLayerSpec {
    int width = 0;
    Activation activation = Activation::Relu;
    bool operator==(const DenseLayerSpec&) const = default;
};

struct ConvLayerSpec {
    int out_channels = 0;
    int kernel_size = 0;
    bool operator==(const ConvLayerSpec&) const = default;
};

// Flat inputs use height = width = 1 and channels = D with image = false.
struct InputShape {
    int height = 1;
    int width = 1;
    int channels = 1;
    bool image = false;

    static InputShape flat(int dims) { return {1, 1, dims, false}; }
    static InputShape hwc(int h, int w, int c) { return {h, w, c, true}; }
    std::size_t dims() const { return static_cast<std::size_t>(height) * width * channels; }
    bool operator==(const InputShape&) const = default;
};

// For mlp, `dense` lists every layer including the softmax output.
// For cnn-min, `conv` lists the convolutions (valid padding, stride 1, relu);
// the single softmax dense head is implied by `classes`.
struct ModelSpec {
    ModelKind kind = ModelKind::Mlp;
    InputShape input;
    int classes = 2;
    std::vector<DenseLayerSpec> dense;
    std::vector<ConvLayerSpec> conv;
    Pooling pooling = Pooling::Flatten;
    std::uint64_t seed = 0;

    // Throws Error(BadInput) describing the first inconsistency.
    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

struct TensorSlot {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::vector<int> shape;
    bool operator==(const TensorSlot&) const = default;
};

struct ParamLayout {
    std::vector<TensorSlot> tensors;

    std::size_t size() const;
    const TensorSlot* find(const std::string& name) const;
    // Indices of the tensors selected by a layer name ("conv0"), a tensor name
    // ("conv0.weight") or "all". Empty when nothing matches.
    std::vector<std::size_t> select(const std::string& selector) const;
    std::vector<std::string> layer_names() const;
    bool operator==(const ParamLayout&) const = default;
};

struct ParamVector {
    std::vector<double> values;
    ParamLayout layout;

    std::size_t size() const { return values.size(); }
    bool operator==(const ParamVector&) const = default;
};

// Values exchanged between clients and the server are 32-bit floats.
double to_wire(double v);
void round_to_wire(std::vector<double>& values);

struct LossGradient {
    double loss = 0.0;
    std::vector<double> gradient;
};

// Differentiable model built from a ModelSpec. Stateless apart from the
// precomputed stage table, so one instance can serve concurrent callers.
class Network {
public:
    explicit Network(ModelSpec spec);

    const ModelSpec& spec() const { return spec_; }
    const ParamLayout& layout() const { return layout_; }
    std::size_t parameter_count() const { return layout_.size(); }
    std::size_t input_dims() const { return spec_.input.dims(); }
    int classes() const { return spec_.classes; }

    // Glorot-uniform weights and zero biases, rounded to wire precision.
    ParamVector init() const;

    // Row-wise class probabilities.
    RecordMatrix forward(const ParamVector& params, const RecordMatrix& batch) const;
    RecordMatrix forward(std::span<const double> params, const RecordMatrix& batch) const;

    // Argmax of the probabilities, ties to the lowest class index.
    std::vector<int> predict(const ParamVector& params, const RecordMatrix& batch) const;

    // Mean cross-entropy over the batch and its gradient w.r.t. all parameters.
    LossGradient loss_and_gradient(std::span<const double> params, const RecordMatrix& batch,
                                   std::span<const int> labels) const;

    // Convolution layer names ("conv0", ...); empty for mlp.
    std::vector<std::string> conv_layer_names() const;
    // Spatial/channel shape of a conv layer's activation.
    struct FeatureShape {
        int height = 0;
        int width = 0;
        int channels = 0;
    };
    FeatureShape conv_output_shape(const std::string& conv_layer) const;

    // Post-relu activation of a conv layer on a single record, and the gradient
    // of the pre-softmax score of `target_class` w.r.t. that activation.
    struct FeatureGradient {
        std::vector<double> activation;
        std::vector<double> gradient;
        std::vector<double> logits;
    };
    FeatureGradient conv_feature_gradient(std::span<const double> params, std::span<const double> record,
                                          const std::string& conv_layer,
                                          std::optional<int> target_class) const;

    // Logits obtained by feeding `activation` as the output of `conv_layer`.
    std::vector<double> logits_from_conv(std::span<const double> params, const std::string& conv_layer,
                                         std::span<const double> activation) const;

private:
    enum class StageType { Conv, GlobalPool, Dense };
    struct Stage {
        StageType type;
        std::string name;
        int in_h = 1, in_w = 1, in_c = 1;
        int out_h = 1, out_w = 1, out_c = 1;
        int kernel = 0;
        bool relu = false;
        std::size_t weight_offset = 0;
        std::size_t bias_offset = 0;
        std::size_t in_size() const { return static_cast<std::size_t>(in_h) * in_w * in_c; }
        std::size_t out_size() const { return static_cast<std::size_t>(out_h) * out_w * out_c; }
    };

    using Activations = std::vector<std::vector<double>>;

    void run_stages(std::span<const double> params, Activations& acts, std::size_t first_stage) const;
    void check_finite(const std::vector<double>& values, const Stage& stage) const;
    // Backpropagates `grad_logits` down to the input of stage `stop_stage`,
    // accumulating parameter gradients into `param_grad` when it is non-empty.
    std::vector<double> backprop(std::span<const double> params, const Activations& acts,
                                 std::vector<double> grad_logits, std::span<double> param_grad,
                                 std::size_t stop_stage) const;
    std::size_t conv_stage_index(const std::string& conv_layer) const;

    ModelSpec spec_;
    ParamLayout layout_;
    std::vector<Stage> stages_;
};

// Softmax with max-subtraction.
std::vector<double> softmax(std::span<const double> logits);
int argmax(std::span<const double> values);

}  // namespace hetlab::fl
