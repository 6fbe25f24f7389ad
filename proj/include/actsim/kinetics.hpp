#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "actsim/common.hpp"
#include "actsim/core.hpp"
#include "actsim/model.hpp"
#include "actsim/rng.hpp"

namespace actsim::kinetics {

inline constexpr int kNumMetabolites = 33;
inline constexpr int kStateDim = 34;  // cell density + metabolites
inline constexpr int kNumReactions = 30;
inline constexpr int kNumRateLaws = 39;  // reversible pairs contribute two laws
inline constexpr int kNumParams = 73;

/// State vector indices. Entry 0 is cell density; entries 1..33 are
/// concentrations in mM. E-prefixed names are extracellular pools.
enum Met : int {
    M_X = 0,
    M_GLC, M_G6P, M_F6P, M_GAP, M_PEP, M_PYR, M_LAC, M_ELAC, M_EPYR,
    M_RU5P, M_ACCOA, M_CIT, M_AKG, M_SUC, M_FUM, M_MAL, M_OAA,
    M_GLN, M_EGLN, M_GLU, M_ALA, M_ASP, M_EASP, M_SER, M_GLY, M_NH4,
    M_EALA, M_EGLU, M_ENH4, M_ESER, M_EGLY, M_EASN, M_EARG,
};

struct MetaboliteLayout {
    static const std::array<std::string, kStateDim>& names();
    static int index(const std::string& name);  // throws ConfigError if unknown
};

/// Kinetic parameter indices: 39 v_max entries (rate-law order), 26 K_m,
/// 6 K_i, 2 K_a. Config keys are the names() entries, e.g. "v_max.HK".
enum Param : int {
    P_VMAX_HK = 0, P_VMAX_PGI, P_VMAX_PFK_ALD, P_VMAX_PGK, P_VMAX_PK,
    P_VMAX_fLDH, P_VMAX_rLDH, P_VMAX_PYRT, P_VMAX_fLACT, P_VMAX_rLACT,
    P_VMAX_OP, P_VMAX_NOP, P_VMAX_PDH, P_VMAX_CS, P_VMAX_fCITS_ISOD,
    P_VMAX_rCITS_ISOD, P_VMAX_AKGDH, P_VMAX_SDH, P_VMAX_fFUM, P_VMAX_rFUM,
    P_VMAX_fMDH, P_VMAX_rMDH, P_VMAX_ME, P_VMAX_PC, P_VMAX_fGLNS, P_VMAX_rGLNS,
    P_VMAX_fGLDH, P_VMAX_rGLDH, P_VMAX_fALATA, P_VMAX_rALATA, P_VMAX_ALAT,
    P_VMAX_GLUT, P_VMAX_GLNT, P_VMAX_SAL, P_VMAX_fASTA, P_VMAX_rASTA,
    P_VMAX_ASPT, P_VMAX_ACL, P_VMAX_GROWTH,
    P_KM_GLC, P_KM_G6P, P_KM_F6P, P_KM_GAP, P_KM_PEP, P_KM_PYR, P_KM_LAC,
    P_KM_EPYR, P_KM_ELAC, P_KM_RU5P, P_KM_ACCOA, P_KM_OAA, P_KM_CIT, P_KM_AKG,
    P_KM_SUC, P_KM_FUM, P_KM_MAL, P_KM_GLN, P_KM_GLU, P_KM_NH4, P_KM_ALA,
    P_KM_EGLN, P_KM_SER, P_KM_ASP, P_KM_EASP, P_KM_GLY,
    P_KI_G6P, P_KI_LAC_HK, P_KI_PYR, P_KI_LAC_PYRT, P_KI_LAC_GLNS, P_KI_GLN,
    P_KA_F6P, P_KA_GLN,
};

struct KineticParams {
    std::array<double, kNumParams> value{};
    std::array<bool, kNumParams> mask{};
    std::array<double, kNumParams> lo{};
    std::array<double, kNumParams> hi{};

    static const std::array<std::string, kNumParams>& names();
    static int index(const std::string& name);  // throws ConfigError if unknown

    /// Default parameterization and [1e-6·default, 8·default] bounds,
    /// with the 20-parameter calibration mask.
    static KineticParams defaults();

    /// Case-study masks of size 20, 30 or 40.
    void set_case_mask(int case_size);

    int masked_dim() const;
    std::vector<int> masked_indices() const;
    Vec masked_values() const;
    void set_masked_values(const Vec& beta);
    void masked_bounds(Vec& lo_out, Vec& hi_out) const;
    std::vector<std::string> masked_names() const;
};

/// Net-reaction names, in stoichiometry column order.
const std::array<std::string, kNumReactions>& reaction_names();
int reaction_index(const std::string& name);

struct StoichTriplet {
    int reaction;    // column, 0..29
    int metabolite;  // state index, 1..33
    double coeff;    // negative: substrate, positive: product
};

struct StoichiometryMatrix {
    std::vector<StoichTriplet> triplets;

    static StoichiometryMatrix defaults();
    double coeff(int reaction, int metabolite_state_index) const;

    /// Sparse triplet text: "reaction metabolite coefficient" per line.
    void save(const std::string& path) const;
    static StoichiometryMatrix load(const std::string& path);
};

struct NoiseSpec {
    Vec stddev;  // kStateDim entries

    /// stddev_i = max(frac * initial_i, floor); the floor keeps the
    /// likelihood's diagonal covariance positive for zero-initial entries.
    static NoiseSpec from_initial_state(const Vec& s0, double frac, double floor);
};

struct RewardConstants {
    double c_r = 30.0;   // $ per unit biomass increment
    double c_m = 120.0;  // $ per 100% medium exchange
    double c_l = 84.0;   // $ per mM lactate increase
    double yield_conversion = 1.0;  // multiplies delta-X (unit conversion)
    double lactate_cap = 2.0;       // per-step lactate-change cap in the shift
};

struct GrowthConstants {
    double mu_max = 0.04;  // 1/h
    double k_d = 0.01;     // 1/h
    double K_Dlac = 32.0;  // mM
    double K_glc = 1.0;    // mM
    double K_Ilac = 32.0;  // mM
};

/// Everything needed to simulate the culture and evaluate rewards.
struct KineticsSpec {
    KineticParams params;
    StoichiometryMatrix stoich;
    GrowthConstants growth;
    RewardConstants reward;
    Vec base_state;  // entry 0: seeding density, entries 1..33: fresh medium u0
    NoiseSpec noise;
    double dt_hours = 4.0;
    int substeps = 16;
    double init_perturbation = 0.2;  // multiplicative U(1-p, 1+p) per entry

    static KineticsSpec defaults();
};

/// 30 net flux rates at `state` (reversible pairs folded forward-minus-reverse).
Vec flux_rates(const Vec& state, const KineticParams& params);

/// (growth rate mu, death rate mu_d) in 1/h.
std::pair<double, double> growth_rate(const Vec& state, const GrowthConstants& g);

/// Convex combination toward the fresh-medium profile; entry 0 (cell
/// density) is left unchanged. Throws std::invalid_argument unless 0<=b<=1.
Vec apply_medium_exchange(const Vec& state, const Vec& fresh, double b);

/// Exchange, then explicit Euler over `spec.substeps` inner steps with
/// nonnegativity clamping after each substep. Deterministic.
Vec mean_transition(const KineticsSpec& spec, const Vec& state, double b);

/// mean_transition plus diagonal Gaussian noise, clamped at 0.
Vec sample_transition(const KineticsSpec& spec, const Vec& state, double b, RngStream& rng);

/// Raw economic reward over one interval: c_r*yield*dX - c_m*b - c_l*dELAC,
/// with the lactate delta measured from the post-exchange baseline.
double reward_raw(const KineticsSpec& spec, const Vec& prev_state, const ActionValue& a,
                  const Vec& next_state);

/// Raw reward shifted by c_m + c_l*lactate_cap and clipped at 0, keeping
/// rewards nonnegative for the value-boundedness contract.
double reward_shifted(const KineticsSpec& spec, const Vec& prev_state, const ActionValue& a,
                      const Vec& next_state);

/// Parameter file I/O (keys exactly the parameter names). Loading applies
/// file entries on top of `base`; unknown keys raise ConfigError.
KineticParams load_params(const std::string& path, KineticParams base = KineticParams::defaults());
void save_params(const KineticParams& params, const std::string& path);

/// TransitionModel over the masked kinetic parameters.
class KineticsModel : public TransitionModel {
  public:
    explicit KineticsModel(KineticsSpec spec) : spec_(std::move(spec)) {}

    int state_dim() const override { return kStateDim; }
    int param_dim() const override { return spec_.params.masked_dim(); }
    Vec params() const override { return spec_.params.masked_values(); }
    void set_params(const Vec& beta) override { spec_.params.set_masked_values(beta); }
    void param_bounds(Vec& lo, Vec& hi) const override { spec_.params.masked_bounds(lo, hi); }
    std::vector<std::string> param_names() const override { return spec_.params.masked_names(); }
    const Vec& noise_stddev() const override { return spec_.noise.stddev; }
    Vec mean(const Vec& s, const ActionValue& a) const override {
        return mean_transition(spec_, s, a.b);
    }
    void mean_and_jacobian(const Vec& s, const ActionValue& a, Vec& f, Mat& jac) const override;
    Vec clamp_state(Vec s) const override {
        for (double& x : s) x = x < 0.0 ? 0.0 : x;
        return s;
    }

    const KineticsSpec& spec() const { return spec_; }
    KineticsSpec& spec() { return spec_; }

  private:
    KineticsSpec spec_;
};

/// Environment view of a KineticsModel (episode dynamics + rewards).
class KineticsEnv : public Environment {
  public:
    KineticsEnv(const KineticsModel* model, int n_actions = 11)
        : model_(model), grid_(make_action_grid(n_actions)) {}

    int state_dim() const override { return kStateDim; }
    int n_actions() const override { return static_cast<int>(grid_.size()); }
    ActionValue action(int index) const override { return grid_[index]; }
    Vec initial_state(RngStream& rng) const override;
    Vec step_sample(const Vec& s, const ActionValue& a, RngStream& rng) const override {
        return model_->sample(s, a, rng);
    }
    double reward(const Vec& s, const ActionValue& a, const Vec& s_next) const override {
        return reward_shifted(model_->spec(), s, a, s_next);
    }
    double reward_raw(const Vec& s, const ActionValue& a, const Vec& s_next) const override {
        return kinetics::reward_raw(model_->spec(), s, a, s_next);
    }
    const std::vector<ActionValue>& grid() const { return grid_; }

  private:
    const KineticsModel* model_;
    std::vector<ActionValue> grid_;
};

}  // namespace actsim::kinetics
