#include "hetlab/analytics/grad_cam.hpp"

#include "hetlab/error.hpp"

namespace hetlab::analytics {

Eigen::MatrixXd average_grad_cam(const fl::Network& net, const fl::ParamVector& params, const RecordMatrix& records,
                                 const RecordIds& ids, const std::string& conv_layer) {
    if (ids.empty()) throw bad_input("grad-cam: empty record set");
    const auto shape = net.conv_output_shape(conv_layer);
    const auto area = static_cast<std::size_t>(shape.height) * static_cast<std::size_t>(shape.width);
    const auto channels = static_cast<std::size_t>(shape.channels);
    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(shape.height, shape.width);
    for (auto id : ids) {
        if (id >= static_cast<std::size_t>(records.rows()))
            throw bad_input("grad-cam: record id " + std::to_string(id) + " out of range");
        const auto row = records.row(static_cast<Eigen::Index>(id));
        const auto fg = net.conv_feature_gradient(
            params.values, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())), conv_layer,
            std::nullopt);
        std::vector<double> weights(channels, 0.0);
        for (std::size_t p = 0; p < area; ++p)
            for (std::size_t k = 0; k < channels; ++k) weights[k] += fg.gradient[p * channels + k];
        for (auto& w : weights) w /= static_cast<double>(area);
        for (std::size_t p = 0; p < area; ++p) {
            double v = 0.0;
            for (std::size_t k = 0; k < channels; ++k) v += weights[k] * fg.activation[p * channels + k];
            if (v > 0.0)
                total(static_cast<Eigen::Index>(p / static_cast<std::size_t>(shape.width)),
                      static_cast<Eigen::Index>(p % static_cast<std::size_t>(shape.width))) += v;
        }
    }
    total /= static_cast<double>(ids.size());
    const double peak = total.maxCoeff();
    if (peak > 0.0) total /= peak;
    return total;
}

GradCamPair grad_cam_pair(const fl::Network& net, const fl::ParamVector& standalone,
                          const fl::ParamVector& federated, const RecordMatrix& records, const RecordIds& ids,
                          std::string conv_layer) {
    if (net.spec().kind != fl::ModelKind::CnnMin)
        throw unsupported_architecture("grad-cam requires a cnn-min model; use the ccpca entrance");
    if (conv_layer.empty()) conv_layer = net.conv_layer_names().back();
    GradCamPair out;
    out.layer = conv_layer;
    out.standalone = average_grad_cam(net, standalone, records, ids, conv_layer);
    out.federated = average_grad_cam(net, federated, records, ids, conv_layer);
    return out;
}

}  // namespace hetlab::analytics
