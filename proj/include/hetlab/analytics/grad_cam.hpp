#pragma once

#include "hetlab/fl/model.hpp"
#include "hetlab/types.hpp"

#include <string>

namespace hetlab::analytics {

// Average Grad-CAM of one model over a record set: per record the target is
// the model's own prediction, channel weights are the spatial mean of the
// score gradient, the map is relu(sum_k w_k A_k). The average is scaled to a
// maximum of 1 unless it is all zero.
Eigen::MatrixXd average_grad_cam(const fl::Network& net, const fl::ParamVector& params, const RecordMatrix& records,
                                 const RecordIds& ids, const std::string& conv_layer);

struct GradCamPair {
    std::string layer;
    Eigen::MatrixXd standalone;
    Eigen::MatrixXd federated;
};

// Throws Error(UnsupportedArchitecture) for mlp models. An empty `conv_layer`
// selects the last convolution.
GradCamPair grad_cam_pair(const fl::Network& net, const fl::ParamVector& standalone,
                          const fl::ParamVector& federated, const RecordMatrix& records, const RecordIds& ids,
                          std::string conv_layer = {});

}  // namespace hetlab::analytics
