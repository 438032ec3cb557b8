#include "cfmimo/precoding.hpp"

#include "cfmimo/errors.hpp"

namespace cfmimo {

namespace {

int antenna_count(const LinkGrid<Eigen::VectorXcd>& h) {
    return h.rows() > 0 && h.cols() > 0 ? static_cast<int>(h(0, 0).size()) : 0;
}

}  // namespace

LinkGrid<Eigen::VectorXcd> mr_precoder(const LinkGrid<Eigen::VectorXcd>& h_hat, const Dcc& dcc) {
    const int K = h_hat.rows();
    const int L = h_hat.cols();
    const int N = antenna_count(h_hat);
    LinkGrid<Eigen::VectorXcd> out(K, L, Eigen::VectorXcd::Zero(N));
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < L; ++l)
            if (dcc.serves(k, l)) out(k, l) = h_hat(k, l);
    return out;
}

LinkGrid<Eigen::VectorXcd> rzf_precoder(const LinkGrid<Eigen::VectorXcd>& h_hat, const Dcc& dcc,
                                        double p_ul, double noise_power) {
    const int K = h_hat.rows();
    const int L = h_hat.cols();
    const int N = antenna_count(h_hat);
    LinkGrid<Eigen::VectorXcd> out(K, L, Eigen::VectorXcd::Zero(N));
    Eigen::MatrixXcd gram(N, N);
    for (int l = 0; l < L; ++l) {
        const auto& served = dcc.served[l];
        if (served.empty()) continue;
        gram = noise_power * Eigen::MatrixXcd::Identity(N, N);
        for (int i : served) gram.noalias() += p_ul * h_hat(i, l) * h_hat(i, l).adjoint();
        Eigen::LLT<Eigen::MatrixXcd> llt(gram);
        if (llt.info() != Eigen::Success) throw NumericalError("RZF Gram matrix is not positive definite");
        for (int k : served) out(k, l) = llt.solve(p_ul * h_hat(k, l));
    }
    return out;
}

PrecoderSet normalize(const LinkGrid<Eigen::VectorXcd>& directions, const Dcc& dcc,
                      PrecodingScheme scheme) {
    const int K = directions.rows();
    const int L = directions.cols();
    const int N = antenna_count(directions);
    PrecoderSet out{LinkGrid<Eigen::VectorXcd>(K, L, Eigen::VectorXcd::Zero(N)), scheme};
    for (int k = 0; k < K; ++k) {
        for (int l = 0; l < L; ++l) {
            if (!dcc.serves(k, l)) continue;
            const double norm = directions(k, l).norm();
            if (!(norm > 0.0) || !std::isfinite(norm))
                throw NumericalError("zero or non-finite precoding direction on a served link");
            out.w(k, l) = directions(k, l) / norm;
        }
    }
    return out;
}

PrecoderSet compute_precoders(PrecodingScheme scheme, const LinkGrid<Eigen::VectorXcd>& h_hat,
                              const Dcc& dcc, const SystemConfig& config) {
    if (scheme == PrecodingScheme::MR) return normalize(mr_precoder(h_hat, dcc), dcc, scheme);
    return normalize(rzf_precoder(h_hat, dcc, config.p_ul, config.noise_power), dcc, scheme);
}

}  // namespace cfmimo
