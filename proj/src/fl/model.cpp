#include "hetlab/fl/model.hpp"

#include "hetlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace hetlab::fl {

void ModelSpec::validate() const {
    if (classes < 2) throw bad_input("model spec: class count must be >= 2");
    if (input.height < 1 || input.width < 1 || input.channels < 1)
        throw bad_input("model spec: input dimensions must be positive");
    if (kind == ModelKind::Mlp) {
        if (dense.empty()) throw bad_input("model spec: mlp needs at least one layer");
        for (std::size_t i = 0; i < dense.size(); ++i) {
            const auto& layer = dense[i];
            if (layer.width < 1)
                throw bad_input("model spec: layer dense" + std::to_string(i) + " has non-positive width");
            const bool last = i + 1 == dense.size();
            if (last && layer.activation != Activation::Softmax)
                throw bad_input("model spec: last mlp layer must be softmax-output");
            if (!last && layer.activation != Activation::Relu)
                throw bad_input("model spec: only the last mlp layer may be softmax-output");
        }
        if (dense.back().width != classes)
            throw bad_input("model spec: output width " + std::to_string(dense.back().width) +
                            " does not match class count " + std::to_string(classes));
        return;
    }
    if (!input.image) throw bad_input("model spec: cnn-min needs an image input shape (H, W, C)");
    if (conv.empty()) throw bad_input("model spec: cnn-min needs at least one conv layer");
    int h = input.height;
    int w = input.width;
    for (std::size_t i = 0; i < conv.size(); ++i) {
        const auto& layer = conv[i];
        if (layer.out_channels < 1 || layer.kernel_size < 1)
            throw bad_input("model spec: conv" + std::to_string(i) + " has non-positive size");
        h -= layer.kernel_size - 1;
        w -= layer.kernel_size - 1;
        if (h < 1 || w < 1)
            throw bad_input("model spec: conv" + std::to_string(i) + " kernel exceeds its input extent");
    }
    if (!dense.empty()) {
        if (dense.size() != 1 || dense[0].width != classes || dense[0].activation != Activation::Softmax)
            throw bad_input("model spec: cnn-min head must be one softmax dense layer of width L");
    }
}

std::size_t ParamLayout::size() const {
    return tensors.empty() ? 0 : tensors.back().offset + tensors.back().length;
}

const TensorSlot* ParamLayout::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

std::vector<std::size_t> ParamLayout::select(const std::string& selector) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& name = tensors[i].name;
        const auto layer = name.substr(0, name.find('.'));
        if (selector == "all" || selector == name || selector == layer) out.push_back(i);
    }
    return out;
}

std::vector<std::string> ParamLayout::layer_names() const {
    std::vector<std::string> out;
    for (const auto& t : tensors) {
        auto layer = t.name.substr(0, t.name.find('.'));
        if (out.empty() || out.back() != layer) out.push_back(std::move(layer));
    }
    return out;
}

double to_wire(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_to_wire(std::vector<double>& values) {
    for (auto& v : values) v = to_wire(v);
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> out(logits.begin(), logits.end());
    if (out.empty()) return out;
    const double peak = *std::max_element(out.begin(), out.end());
    double total = 0.0;
    for (auto& v : out) {
        v = std::exp(v - peak);
        total += v;
    }
    for (auto& v : out) v /= total;
    return out;
}

int argmax(std::span<const double> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

Network::Network(ModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t offset = 0;
    auto add_tensor = [&](const std::string& name, std::vector<int> shape) {
        std::size_t length = 1;
        for (int s : shape) length *= static_cast<std::size_t>(s);
        layout_.tensors.push_back({name, offset, length, std::move(shape)});
        offset += length;
        return layout_.tensors.back().offset;
    };
    auto add_dense = [&](const std::string& name, std::size_t in_dim, int out_dim, bool relu) {
        Stage s{StageType::Dense, name};
        s.in_c = static_cast<int>(in_dim);
        s.out_c = out_dim;
        s.relu = relu;
        s.weight_offset = add_tensor(name + ".weight", {out_dim, static_cast<int>(in_dim)});
        s.bias_offset = add_tensor(name + ".bias", {out_dim});
        stages_.push_back(std::move(s));
    };

    if (spec_.kind == ModelKind::Mlp) {
        std::size_t in_dim = spec_.input.dims();
        for (std::size_t i = 0; i < spec_.dense.size(); ++i) {
            const auto& layer = spec_.dense[i];
            add_dense("dense" + std::to_string(i), in_dim, layer.width, layer.activation == Activation::Relu);
            in_dim = static_cast<std::size_t>(layer.width);
        }
        return;
    }

    int h = spec_.input.height;
    int w = spec_.input.width;
    int c = spec_.input.channels;
    for (std::size_t i = 0; i < spec_.conv.size(); ++i) {
        const auto& layer = spec_.conv[i];
        Stage s{StageType::Conv, "conv" + std::to_string(i)};
        s.in_h = h;
        s.in_w = w;
        s.in_c = c;
        s.kernel = layer.kernel_size;
        s.out_h = h - layer.kernel_size + 1;
        s.out_w = w - layer.kernel_size + 1;
        s.out_c = layer.out_channels;
        s.relu = true;
        s.weight_offset =
            add_tensor(s.name + ".weight", {layer.out_channels, c, layer.kernel_size, layer.kernel_size});
        s.bias_offset = add_tensor(s.name + ".bias", {layer.out_channels});
        h = s.out_h;
        w = s.out_w;
        c = s.out_c;
        stages_.push_back(std::move(s));
    }
    if (spec_.pooling == Pooling::GlobalAverage) {
        Stage s{StageType::GlobalPool, "pool"};
        s.in_h = h;
        s.in_w = w;
        s.in_c = c;
        s.out_c = c;
        stages_.push_back(std::move(s));
        h = w = 1;
    }
    add_dense("dense0", static_cast<std::size_t>(h) * w * c, spec_.classes, false);
}

ParamVector Network::init() const {
    ParamVector p;
    p.layout = layout_;
    p.values.assign(layout_.size(), 0.0);
    std::mt19937_64 rng(spec_.seed);
    for (const auto& s : stages_) {
        if (s.type == StageType::GlobalPool) continue;
        double fan_in = 0.0;
        double fan_out = 0.0;
        std::size_t count = 0;
        if (s.type == StageType::Conv) {
            const double area = static_cast<double>(s.kernel) * s.kernel;
            fan_in = s.in_c * area;
            fan_out = s.out_c * area;
            count = static_cast<std::size_t>(s.out_c) * s.in_c * s.kernel * s.kernel;
        } else {
            fan_in = s.in_c;
            fan_out = s.out_c;
            count = static_cast<std::size_t>(s.out_c) * s.in_c;
        }
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < count; ++i) p.values[s.weight_offset + i] = to_wire(dist(rng));
    }
    return p;
}

void Network::check_finite(const std::vector<double>& values, const Stage& stage) const {
    for (double v : values)
        if (!std::isfinite(v)) throw numeric_error("non-finite activation in layer " + stage.name);
}

void Network::run_stages(std::span<const double> params, Activations& acts, std::size_t first_stage) const {
    for (std::size_t si = first_stage; si < stages_.size(); ++si) {
        const Stage& s = stages_[si];
        const std::vector<double>& in = acts[si];
        std::vector<double> out(s.out_size(), 0.0);
        switch (s.type) {
            case StageType::Conv: {
                const double* W = params.data() + s.weight_offset;
                const double* b = params.data() + s.bias_offset;
                const int K = s.kernel;
                for (int y = 0; y < s.out_h; ++y)
                    for (int x = 0; x < s.out_w; ++x)
                        for (int k = 0; k < s.out_c; ++k) {
                            double z = b[k];
                            for (int c = 0; c < s.in_c; ++c)
                                for (int i = 0; i < K; ++i) {
                                    const double* wrow = W + ((static_cast<std::size_t>(k) * s.in_c + c) * K + i) * K;
                                    const double* irow = in.data() + ((static_cast<std::size_t>(y + i) * s.in_w + x) * s.in_c + c);
                                    for (int j = 0; j < K; ++j) z += wrow[j] * irow[static_cast<std::size_t>(j) * s.in_c];
                                }
                            out[(static_cast<std::size_t>(y) * s.out_w + x) * s.out_c + k] = z > 0.0 ? z : 0.0;
                        }
                break;
            }
            case StageType::GlobalPool: {
                const std::size_t area = static_cast<std::size_t>(s.in_h) * s.in_w;
                for (std::size_t p = 0; p < area; ++p)
                    for (int c = 0; c < s.in_c; ++c) out[static_cast<std::size_t>(c)] += in[p * s.in_c + c];
                for (auto& v : out) v /= static_cast<double>(area);
                break;
            }
            case StageType::Dense: {
                const std::size_t n_in = s.in_size();
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
                    params.data() + s.weight_offset, s.out_c, static_cast<Eigen::Index>(n_in));
                Eigen::Map<const Eigen::VectorXd> b(params.data() + s.bias_offset, s.out_c);
                Eigen::Map<const Eigen::VectorXd> x(in.data(), static_cast<Eigen::Index>(n_in));
                Eigen::Map<Eigen::VectorXd> z(out.data(), s.out_c);
                z.noalias() = W * x + b;
                if (s.relu) z = z.cwiseMax(0.0);
                break;
            }
        }
        check_finite(out, s);
        acts[si + 1] = std::move(out);
    }
}

std::vector<double> Network::backprop(std::span<const double> params, const Activations& acts,
                                      std::vector<double> grad, std::span<double> param_grad,
                                      std::size_t stop_stage) const {
    const bool want_params = !param_grad.empty();
    for (std::size_t si = stages_.size(); si-- > stop_stage;) {
        const Stage& s = stages_[si];
        const std::vector<double>& in = acts[si];
        const std::vector<double>& out = acts[si + 1];
        if (s.relu)
            for (std::size_t i = 0; i < grad.size(); ++i)
                if (out[i] <= 0.0) grad[i] = 0.0;
        std::vector<double> grad_in(s.in_size(), 0.0);
        switch (s.type) {
            case StageType::Conv: {
                const double* W = params.data() + s.weight_offset;
                const int K = s.kernel;
                for (int y = 0; y < s.out_h; ++y)
                    for (int x = 0; x < s.out_w; ++x)
                        for (int k = 0; k < s.out_c; ++k) {
                            const double g = grad[(static_cast<std::size_t>(y) * s.out_w + x) * s.out_c + k];
                            if (g == 0.0) continue;
                            if (want_params) param_grad[s.bias_offset + static_cast<std::size_t>(k)] += g;
                            for (int c = 0; c < s.in_c; ++c)
                                for (int i = 0; i < K; ++i) {
                                    const std::size_t wbase = ((static_cast<std::size_t>(k) * s.in_c + c) * K + i) * K;
                                    const std::size_t ibase = (static_cast<std::size_t>(y + i) * s.in_w + x) * s.in_c + c;
                                    for (int j = 0; j < K; ++j) {
                                        const std::size_t ii = ibase + static_cast<std::size_t>(j) * s.in_c;
                                        if (want_params) param_grad[s.weight_offset + wbase + j] += g * in[ii];
                                        grad_in[ii] += g * W[wbase + j];
                                    }
                                }
                        }
                break;
            }
            case StageType::GlobalPool: {
                const std::size_t area = static_cast<std::size_t>(s.in_h) * s.in_w;
                for (std::size_t p = 0; p < area; ++p)
                    for (int c = 0; c < s.in_c; ++c)
                        grad_in[p * s.in_c + c] = grad[static_cast<std::size_t>(c)] / static_cast<double>(area);
                break;
            }
            case StageType::Dense: {
                const std::size_t n_in = s.in_size();
                const double* W = params.data() + s.weight_offset;
                for (int o = 0; o < s.out_c; ++o) {
                    const double g = grad[static_cast<std::size_t>(o)];
                    if (g == 0.0) continue;
                    const std::size_t row = static_cast<std::size_t>(o) * n_in;
                    if (want_params) {
                        param_grad[s.bias_offset + static_cast<std::size_t>(o)] += g;
                        for (std::size_t i = 0; i < n_in; ++i) param_grad[s.weight_offset + row + i] += g * in[i];
                    }
                    for (std::size_t i = 0; i < n_in; ++i) grad_in[i] += g * W[row + i];
                }
                break;
            }
        }
        grad = std::move(grad_in);
    }
    return grad;
}

RecordMatrix Network::forward(const ParamVector& params, const RecordMatrix& batch) const {
    if (params.size() != parameter_count())
        throw bad_input("parameter vector length " + std::to_string(params.size()) + " does not match model (" +
                        std::to_string(parameter_count()) + ")");
    return forward(std::span<const double>(params.values), batch);
}

RecordMatrix Network::forward(std::span<const double> params, const RecordMatrix& batch) const {
    if (static_cast<std::size_t>(batch.cols()) != input_dims())
        throw bad_input("batch has " + std::to_string(batch.cols()) + " columns, model expects " +
                        std::to_string(input_dims()));
    RecordMatrix probs(batch.rows(), spec_.classes);
    Activations acts(stages_.size() + 1);
    for (Eigen::Index r = 0; r < batch.rows(); ++r) {
        acts[0].assign(batch.row(r).data(), batch.row(r).data() + batch.cols());
        run_stages(params, acts, 0);
        const auto p = softmax(acts.back());
        for (int c = 0; c < spec_.classes; ++c) probs(r, c) = p[static_cast<std::size_t>(c)];
    }
    return probs;
}

std::vector<int> Network::predict(const ParamVector& params, const RecordMatrix& batch) const {
    const RecordMatrix probs = forward(params, batch);
    std::vector<int> labels(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index r = 0; r < probs.rows(); ++r)
        labels[static_cast<std::size_t>(r)] =
            argmax(std::span<const double>(probs.row(r).data(), static_cast<std::size_t>(probs.cols())));
    return labels;
}

LossGradient Network::loss_and_gradient(std::span<const double> params, const RecordMatrix& batch,
                                        std::span<const int> labels) const {
    if (static_cast<std::size_t>(batch.rows()) != labels.size())
        throw bad_input("label count does not match batch size");
    if (batch.rows() == 0) throw bad_input("empty batch");
    LossGradient out;
    out.gradient.assign(parameter_count(), 0.0);
    Activations acts(stages_.size() + 1);
    const double scale = 1.0 / static_cast<double>(batch.rows());
    for (Eigen::Index r = 0; r < batch.rows(); ++r) {
        acts[0].assign(batch.row(r).data(), batch.row(r).data() + batch.cols());
        run_stages(params, acts, 0);
        auto p = softmax(acts.back());
        const auto y = static_cast<std::size_t>(labels[static_cast<std::size_t>(r)]);
        if (y >= p.size()) throw bad_input("label " + std::to_string(y) + " out of range");
        out.loss -= std::log(std::max(p[y], 1e-300)) * scale;
        p[y] -= 1.0;
        for (auto& g : p) g *= scale;
        backprop(params, acts, std::move(p), out.gradient, 0);
    }
    return out;
}

std::vector<std::string> Network::conv_layer_names() const {
    std::vector<std::string> out;
    for (const auto& s : stages_)
        if (s.type == StageType::Conv) out.push_back(s.name);
    return out;
}

std::size_t Network::conv_stage_index(const std::string& conv_layer) const {
    if (spec_.kind != ModelKind::CnnMin)
        throw unsupported_architecture("convolution features require a cnn-min model");
    for (std::size_t i = 0; i < stages_.size(); ++i)
        if (stages_[i].type == StageType::Conv && stages_[i].name == conv_layer) return i;
    throw bad_input("unknown conv layer '" + conv_layer + "'");
}

Network::FeatureShape Network::conv_output_shape(const std::string& conv_layer) const {
    const Stage& s = stages_[conv_stage_index(conv_layer)];
    return {s.out_h, s.out_w, s.out_c};
}

Network::FeatureGradient Network::conv_feature_gradient(std::span<const double> params,
                                                        std::span<const double> record,
                                                        const std::string& conv_layer,
                                                        std::optional<int> target_class) const {
    const std::size_t si = conv_stage_index(conv_layer);
    if (record.size() != input_dims()) throw bad_input("record dimensionality does not match model input");
    Activations acts(stages_.size() + 1);
    acts[0].assign(record.begin(), record.end());
    run_stages(params, acts, 0);
    FeatureGradient out;
    out.logits = acts.back();
    const int target = target_class.value_or(argmax(out.logits));
    std::vector<double> seed(static_cast<std::size_t>(spec_.classes), 0.0);
    seed[static_cast<std::size_t>(target)] = 1.0;
    out.gradient = backprop(params, acts, std::move(seed), {}, si + 1);
    out.activation = acts[si + 1];
    return out;
}

std::vector<double> Network::logits_from_conv(std::span<const double> params, const std::string& conv_layer,
                                              std::span<const double> activation) const {
    const std::size_t si = conv_stage_index(conv_layer);
    if (activation.size() != stages_[si].out_size()) throw bad_input("activation size mismatch");
    Activations acts(stages_.size() + 1);
    acts[si + 1].assign(activation.begin(), activation.end());
    run_stages(params, acts, si + 1);
    return acts.back();
}

}  // namespace hetlab::fl
