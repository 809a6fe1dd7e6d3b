#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace gramsld {

enum class FeatureKind { convolutional, fully_connected };

// Convolutional maps are M x N x C with the channel index fastest; fully
// connected maps are a length-C vector.
class FeatureMap {
public:
    FeatureMap() = default;
    static FeatureMap convolutional(int m, int n, int c, std::vector<double> data = {});
    static FeatureMap fully_connected(int c, std::vector<double> data = {});

    FeatureKind kind() const { return kind_; }
    int rows() const { return m_; }
    int cols() const { return n_; }
    int channels() const { return c_; }
    int positions() const { return m_ * n_; }
    std::size_t size() const { return data_.size(); }

    double& at(int pos, int ch) { return data_[static_cast<std::size_t>(pos) * c_ + ch]; }
    double at(int pos, int ch) const { return data_[static_cast<std::size_t>(pos) * c_ + ch]; }
    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const FeatureMap& o) const {
        return kind_ == o.kind_ && m_ == o.m_ && n_ == o.n_ && c_ == o.c_;
    }

private:
    FeatureKind kind_ = FeatureKind::fully_connected;
    int m_ = 1, n_ = 1, c_ = 0;
    std::vector<double> data_;
};

class GramMatrix {
public:
    explicit GramMatrix(int c = 0) : c_(c), g_(static_cast<std::size_t>(c) * c, 0.0) {}

    int size() const { return c_; }
    double& operator()(int i, int j) { return g_[static_cast<std::size_t>(i) * c_ + j]; }
    double operator()(int i, int j) const { return g_[static_cast<std::size_t>(i) * c_ + j]; }
    std::span<const double> values() const { return g_; }

private:
    int c_;
    std::vector<double> g_;
};

struct GramOptions {
    // Divide convolutional entries by M*N so magnitudes do not scale with ROI size.
    bool spatial_normalize = true;
};

inline constexpr double kGramEpsilon = 1e-8;

// Convolutional: g_ij = <F[:,:,i], F[:,:,j]>_F (/ M*N). Fully connected: g_ij = f_i * f_j.
GramMatrix gram(const FeatureMap& f, GramOptions opts = {});

double gram_mse(const GramMatrix& a, const GramMatrix& b);

struct GramLoss {
    double value = 0.0;  // 1 / (MSE(G1,G2) + eps)
    double mse = 0.0;
    std::vector<double> grad_f1;  // same layout as the feature data
    std::vector<double> grad_f2;
};

GramLoss gram_loss(const FeatureMap& f1, const FeatureMap& f2, GramOptions opts = {});

// Per-ROI losses averaged; gradients scaled accordingly.
struct RoiPair {
    FeatureMap d1;
    FeatureMap d2;
};
GramLoss mean_gram_loss(std::span<const RoiPair> rois, GramOptions opts = {});

struct LossReport {
    double loss_d1 = 0.0;
    double loss_d2 = 0.0;
    double gram_loss = 0.0;
    double alpha = 0.0;
    double total = 0.0;
};

LossReport total_loss(double loss_d1, double loss_d2, double gram_value, double alpha);

// Picks alpha on first use so alpha*gram equals `share` of the detection loss, then freezes it.
class AlphaPolicy {
public:
    static AlphaPolicy fixed(double alpha);
    static AlphaPolicy auto_calibrated(double share = 0.1);

    double alpha_for(double loss_d1, double loss_d2, double gram_value);
    std::optional<double> frozen() const { return alpha_; }
    bool is_auto() const { return auto_; }
    double share() const { return share_; }

private:
    bool auto_ = true;
    double share_ = 0.1;
    std::optional<double> alpha_;
};

// |G1 - G2| entrywise, written as CSV and optionally as a max-scaled 8-bit PGM.
GramMatrix gram_difference(const FeatureMap& f1, const FeatureMap& f2, GramOptions opts = {});
GramMatrix gram_diff_export(const FeatureMap& f1, const FeatureMap& f2,
                            const std::filesystem::path& csv_out,
                            const std::optional<std::filesystem::path>& pgm_out = std::nullopt,
                            GramOptions opts = {});
std::vector<unsigned char> pgm_pixels(const GramMatrix& diff);

// Line 1 is the shape ("M,N,C" or "C"), the rest are the flattened values.
FeatureMap read_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const std::filesystem::path& path, const FeatureMap& f);

}  // namespace gramsld
