#include "gramsld/gram_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "gramsld/error.hpp"

namespace gramsld {

FeatureMap FeatureMap::convolutional(int m, int n, int c, std::vector<double> data) {
    if (m < 1 || n < 1 || c < 1) throw ValidationError("feature map dims must be >= 1");
    FeatureMap f;
    f.kind_ = FeatureKind::convolutional;
    f.m_ = m;
    f.n_ = n;
    f.c_ = c;
    const auto expected = static_cast<std::size_t>(m) * n * c;
    if (data.empty()) data.assign(expected, 0.0);
    if (data.size() != expected) throw ValidationError("feature data size does not match M*N*C");
    f.data_ = std::move(data);
    return f;
}

FeatureMap FeatureMap::fully_connected(int c, std::vector<double> data) {
    if (c < 1) throw ValidationError("feature vector length must be >= 1");
    FeatureMap f;
    f.kind_ = FeatureKind::fully_connected;
    f.c_ = c;
    if (data.empty()) data.assign(c, 0.0);
    if (static_cast<int>(data.size()) != c) throw ValidationError("feature data size does not match C");
    f.data_ = std::move(data);
    return f;
}

namespace {

void require_finite(const FeatureMap& f) {
    for (double v : f.data()) {
        if (!std::isfinite(v)) throw ValidationError("feature map contains non-finite entries");
    }
}

double spatial_scale(const FeatureMap& f, GramOptions opts) {
    if (f.kind() == FeatureKind::convolutional && opts.spatial_normalize) {
        return static_cast<double>(f.positions());
    }
    return 1.0;
}

}  // namespace

GramMatrix gram(const FeatureMap& f, GramOptions opts) {
    require_finite(f);
    const int c = f.channels();
    const int p = f.positions();
    const double scale = spatial_scale(f, opts);
    GramMatrix g(c);
    for (int i = 0; i < c; ++i) {
        for (int j = i; j < c; ++j) {
            double s = 0.0;
            for (int q = 0; q < p; ++q) s += f.at(q, i) * f.at(q, j);
            s /= scale;
            g(i, j) = s;
            g(j, i) = s;
        }
    }
    return g;
}

double gram_mse(const GramMatrix& a, const GramMatrix& b) {
    if (a.size() != b.size()) throw ValidationError("gram size mismatch");
    double s = 0.0;
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t k = 0; k < av.size(); ++k) {
        const double d = av[k] - bv[k];
        s += d * d;
    }
    return s / static_cast<double>(av.size());
}

GramLoss gram_loss(const FeatureMap& f1, const FeatureMap& f2, GramOptions opts) {
    if (!f1.same_shape(f2)) throw ValidationError("gram_loss: feature maps differ in kind or dims");
    const auto g1 = gram(f1, opts);
    const auto g2 = gram(f2, opts);
    const int c = f1.channels();
    const int p = f1.positions();

    GramLoss out;
    out.mse = gram_mse(g1, g2);
    const double denom = out.mse + kGramEpsilon;
    out.value = 1.0 / denom;

    // dV/dG1 = -(1/denom^2) * 2(G1-G2)/C^2 ; dG/dF[q,k] folds to (2/S) * (F * A)[q,k] for symmetric A.
    const double coeff = -1.0 / (denom * denom) * (2.0 / (static_cast<double>(c) * c)) *
                         (2.0 / spatial_scale(f1, opts));
    out.grad_f1.assign(f1.size(), 0.0);
    out.grad_f2.assign(f2.size(), 0.0);
    for (int q = 0; q < p; ++q) {
        for (int k = 0; k < c; ++k) {
            double s1 = 0.0, s2 = 0.0;
            for (int j = 0; j < c; ++j) {
                const double d = g1(j, k) - g2(j, k);
                s1 += f1.at(q, j) * d;
                s2 += f2.at(q, j) * d;
            }
            out.grad_f1[static_cast<std::size_t>(q) * c + k] = coeff * s1;
            out.grad_f2[static_cast<std::size_t>(q) * c + k] = -coeff * s2;
        }
    }
    return out;
}

GramLoss mean_gram_loss(std::span<const RoiPair> rois, GramOptions opts) {
    if (rois.empty()) throw ValidationError("mean_gram_loss: no ROIs");
    GramLoss out;
    const double w = 1.0 / static_cast<double>(rois.size());
    for (const auto& r : rois) {
        auto l = gram_loss(r.d1, r.d2, opts);
        out.value += w * l.value;
        out.mse += w * l.mse;
        // Gradients stay per ROI, concatenated in ROI order.
        for (double g : l.grad_f1) out.grad_f1.push_back(w * g);
        for (double g : l.grad_f2) out.grad_f2.push_back(w * g);
    }
    return out;
}

LossReport total_loss(double loss_d1, double loss_d2, double gram_value, double alpha) {
    if (!(alpha >= 0.0)) throw ValidationError("alpha must be >= 0");
    return {loss_d1, loss_d2, gram_value, alpha, loss_d1 + loss_d2 + alpha * gram_value};
}

AlphaPolicy AlphaPolicy::fixed(double alpha) {
    if (!(alpha >= 0.0)) throw ValidationError("alpha must be >= 0");
    AlphaPolicy p;
    p.auto_ = false;
    p.alpha_ = alpha;
    return p;
}

AlphaPolicy AlphaPolicy::auto_calibrated(double share) {
    if (!(share > 0.0)) throw ValidationError("alpha share must be > 0");
    AlphaPolicy p;
    p.auto_ = true;
    p.share_ = share;
    return p;
}

double AlphaPolicy::alpha_for(double loss_d1, double loss_d2, double gram_value) {
    if (!alpha_) {
        alpha_ = gram_value > 0.0 ? share_ * (loss_d1 + loss_d2) / gram_value : 0.0;
    }
    return *alpha_;
}

GramMatrix gram_difference(const FeatureMap& f1, const FeatureMap& f2, GramOptions opts) {
    if (!f1.same_shape(f2)) throw ValidationError("gram_diff: feature maps differ in kind or dims");
    const auto g1 = gram(f1, opts);
    const auto g2 = gram(f2, opts);
    GramMatrix d(g1.size());
    for (int i = 0; i < g1.size(); ++i) {
        for (int j = 0; j < g1.size(); ++j) d(i, j) = std::abs(g1(i, j) - g2(i, j));
    }
    return d;
}

std::vector<unsigned char> pgm_pixels(const GramMatrix& diff) {
    const auto v = diff.values();
    const double mx = v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    std::vector<unsigned char> px(v.size(), 0);
    if (mx <= 0.0) return px;
    for (std::size_t k = 0; k < v.size(); ++k) {
        px[k] = static_cast<unsigned char>(std::lround(255.0 * v[k] / mx));
    }
    return px;
}

GramMatrix gram_diff_export(const FeatureMap& f1, const FeatureMap& f2,
                            const std::filesystem::path& csv_out,
                            const std::optional<std::filesystem::path>& pgm_out, GramOptions opts) {
    auto d = gram_difference(f1, f2, opts);
    {
        std::ofstream out(csv_out, std::ios::trunc);
        if (!out) throw IoError("cannot write " + csv_out.string());
        out << std::setprecision(17);
        for (int i = 0; i < d.size(); ++i) {
            for (int j = 0; j < d.size(); ++j) out << (j ? "," : "") << d(i, j);
            out << '\n';
        }
        if (!out) throw IoError("short write to " + csv_out.string());
    }
    if (pgm_out) {
        std::ofstream out(*pgm_out, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + pgm_out->string());
        out << "P5\n" << d.size() << ' ' << d.size() << "\n255\n";
        const auto px = pgm_pixels(d);
        out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
        if (!out) throw IoError("short write to " + pgm_out->string());
    }
    return d;
}

FeatureMap read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature file " + path.string());
    auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            if (cell.find_first_not_of(" \t\r") != std::string::npos) cells.push_back(cell);
        }
        return cells;
    };
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("feature file is empty: " + path.string());
    std::vector<int> dims;
    try {
        for (const auto& c : split(line)) dims.push_back(std::stoi(c));
        std::vector<double> values;
        while (std::getline(in, line)) {
            for (const auto& c : split(line)) values.push_back(std::stod(c));
        }
        if (dims.size() == 3) return FeatureMap::convolutional(dims[0], dims[1], dims[2], std::move(values));
        if (dims.size() == 1) return FeatureMap::fully_connected(dims[0], std::move(values));
    } catch (const std::invalid_argument&) {
        throw ValidationError("non-numeric field in feature file " + path.string());
    }
    throw ValidationError("feature file header must be M,N,C or C: " + path.string());
}

void write_feature_csv(const std::filesystem::path& path, const FeatureMap& f) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << std::setprecision(17);
    if (f.kind() == FeatureKind::convolutional) {
        out << f.rows() << ',' << f.cols() << ',' << f.channels() << '\n';
    } else {
        out << f.channels() << '\n';
    }
    const auto d = f.data();
    for (int q = 0; q < f.positions(); ++q) {
        for (int k = 0; k < f.channels(); ++k) {
            out << (k ? "," : "") << d[static_cast<std::size_t>(q) * f.channels() + k];
        }
        out << '\n';
    }
}

}  // namespace gramsld
