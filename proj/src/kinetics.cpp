#include "actsim/kinetics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "actsim/config.hpp"
#include "actsim/dual.hpp"

namespace actsim::kinetics {

namespace {

enum Rxn : int {
    R_HK = 0, R_PGI, R_PFK_ALD, R_PGK, R_PK, R_LDH, R_PYRT, R_LACT, R_OP,
    R_NOP, R_PDH, R_CS, R_CITS_ISOD, R_AKGDH, R_SDH, R_FUM, R_MDH, R_ME,
    R_PC, R_GLNS, R_GLDH, R_ALATA, R_ALAT, R_GLUT, R_GLNT, R_SAL, R_ASTA,
    R_ASPT, R_ACL, R_GROWTH,
};

struct NetFold {
    int fwd;
    int rev;  // -1 for irreversible reactions
};

constexpr std::array<NetFold, kNumReactions> kNetFold = {{
    {P_VMAX_HK, -1},
    {P_VMAX_PGI, -1},
    {P_VMAX_PFK_ALD, -1},
    {P_VMAX_PGK, -1},
    {P_VMAX_PK, -1},
    {P_VMAX_fLDH, P_VMAX_rLDH},
    {P_VMAX_PYRT, -1},
    {P_VMAX_fLACT, P_VMAX_rLACT},
    {P_VMAX_OP, -1},
    {P_VMAX_NOP, -1},
    {P_VMAX_PDH, -1},
    {P_VMAX_CS, -1},
    {P_VMAX_fCITS_ISOD, P_VMAX_rCITS_ISOD},
    {P_VMAX_AKGDH, -1},
    {P_VMAX_SDH, -1},
    {P_VMAX_fFUM, P_VMAX_rFUM},
    {P_VMAX_fMDH, P_VMAX_rMDH},
    {P_VMAX_ME, -1},
    {P_VMAX_PC, -1},
    {P_VMAX_fGLNS, P_VMAX_rGLNS},
    {P_VMAX_fGLDH, P_VMAX_rGLDH},
    {P_VMAX_fALATA, P_VMAX_rALATA},
    {P_VMAX_ALAT, -1},
    {P_VMAX_GLUT, -1},
    {P_VMAX_GLNT, -1},
    {P_VMAX_SAL, -1},
    {P_VMAX_fASTA, P_VMAX_rASTA},
    {P_VMAX_ASPT, -1},
    {P_VMAX_ACL, -1},
    {P_VMAX_GROWTH, -1},
}};

constexpr double kDivergeCap = 1e9;

inline double max_zero(double x) { return x > 0.0 ? x : 0.0; }

template <class S>
void rate_laws_T(const std::array<S, kStateDim>& c, const std::array<S, kNumParams>& p,
                 std::array<S, kNumRateLaws>& v) {
    auto mon = [](const S& x, const S& k) { return x / (k + x); };
    auto inh = [](const S& k, const S& x) { return k / (k + x); };

    v[P_VMAX_HK] = p[P_VMAX_HK] * mon(c[M_GLC], p[P_KM_GLC]) * inh(p[P_KI_G6P], c[M_G6P]) *
                   inh(p[P_KI_LAC_HK], c[M_LAC]);
    v[P_VMAX_PGI] = p[P_VMAX_PGI] * mon(c[M_G6P], p[P_KM_G6P]);
    v[P_VMAX_PFK_ALD] = p[P_VMAX_PFK_ALD] * mon(c[M_F6P], p[P_KM_F6P]);
    v[P_VMAX_PGK] = p[P_VMAX_PGK] * mon(c[M_GAP], p[P_KM_GAP]);
    // Activated form kept in a single fraction so the rate stays defined at
    // F6P = 0 (plain factorization would evaluate 0/0 there).
    v[P_VMAX_PK] = p[P_VMAX_PK] * (c[M_PEP] * c[M_F6P]) /
                   (p[P_KM_PEP] * (c[M_F6P] + p[P_KA_F6P]) + c[M_PEP] * c[M_F6P]);
    v[P_VMAX_fLDH] = p[P_VMAX_fLDH] * mon(c[M_PYR], p[P_KM_PYR]);
    v[P_VMAX_rLDH] = p[P_VMAX_rLDH] * mon(c[M_LAC], p[P_KM_LAC]) * inh(p[P_KI_PYR], c[M_PYR]);
    v[P_VMAX_PYRT] = p[P_VMAX_PYRT] * mon(c[M_EPYR], p[P_KM_EPYR]) *
                     inh(p[P_KI_LAC_PYRT], c[M_LAC]);
    v[P_VMAX_fLACT] = p[P_VMAX_fLACT] * mon(c[M_LAC], p[P_KM_LAC]);
    v[P_VMAX_rLACT] = p[P_VMAX_rLACT] * mon(c[M_ELAC], p[P_KM_ELAC]);
    v[P_VMAX_OP] = p[P_VMAX_OP] * mon(c[M_G6P], p[P_KM_G6P]);
    v[P_VMAX_NOP] = p[P_VMAX_NOP] * mon(c[M_RU5P], p[P_KM_RU5P]);
    v[P_VMAX_PDH] = p[P_VMAX_PDH] * mon(c[M_PYR], p[P_KM_PYR]);
    v[P_VMAX_CS] = p[P_VMAX_CS] * mon(c[M_ACCOA], p[P_KM_ACCOA]) * mon(c[M_OAA], p[P_KM_OAA]);
    v[P_VMAX_fCITS_ISOD] = p[P_VMAX_fCITS_ISOD] * mon(c[M_CIT], p[P_KM_CIT]);
    v[P_VMAX_rCITS_ISOD] = p[P_VMAX_rCITS_ISOD] * mon(c[M_AKG], p[P_KM_AKG]);
    v[P_VMAX_AKGDH] = p[P_VMAX_AKGDH] * mon(c[M_AKG], p[P_KM_AKG]);
    v[P_VMAX_SDH] = p[P_VMAX_SDH] * mon(c[M_SUC], p[P_KM_SUC]);
    v[P_VMAX_fFUM] = p[P_VMAX_fFUM] * mon(c[M_FUM], p[P_KM_FUM]);
    v[P_VMAX_rFUM] = p[P_VMAX_rFUM] * mon(c[M_MAL], p[P_KM_MAL]);
    v[P_VMAX_fMDH] = p[P_VMAX_fMDH] * mon(c[M_MAL], p[P_KM_MAL]);
    v[P_VMAX_rMDH] = p[P_VMAX_rMDH] * mon(c[M_OAA], p[P_KM_OAA]);
    v[P_VMAX_ME] = p[P_VMAX_ME] * mon(c[M_MAL], p[P_KM_MAL]);
    v[P_VMAX_PC] = p[P_VMAX_PC] * mon(c[M_PYR], p[P_KM_PYR]);
    v[P_VMAX_fGLNS] = p[P_VMAX_fGLNS] * mon(c[M_GLN], p[P_KM_GLN]) *
                      inh(p[P_KI_LAC_GLNS], c[M_LAC]);
    v[P_VMAX_rGLNS] = p[P_VMAX_rGLNS] * mon(c[M_GLU], p[P_KM_GLU]) * mon(c[M_NH4], p[P_KM_NH4]);
    v[P_VMAX_fGLDH] = p[P_VMAX_fGLDH] * mon(c[M_GLU], p[P_KM_GLU]);
    v[P_VMAX_rGLDH] = p[P_VMAX_rGLDH] * mon(c[M_AKG], p[P_KM_AKG]) * mon(c[M_NH4], p[P_KM_NH4]);
    v[P_VMAX_fALATA] = p[P_VMAX_fALATA] * mon(c[M_GLU], p[P_KM_GLU]) * mon(c[M_PYR], p[P_KM_PYR]);
    // Glutamine dependence expressed as a bounded inhibition factor so every
    // factor stays in (0,1] and the saturation bound |v| <= v_max holds.
    v[P_VMAX_rALATA] = p[P_VMAX_rALATA] * mon(c[M_ALA], p[P_KM_ALA]) *
                       mon(c[M_AKG], p[P_KM_AKG]) * inh(p[P_KA_GLN], c[M_GLN]);
    v[P_VMAX_ALAT] = p[P_VMAX_ALAT] * mon(c[M_ALA], p[P_KM_ALA]);
    v[P_VMAX_GLUT] = p[P_VMAX_GLUT] * mon(c[M_GLU], p[P_KM_GLU]);
    v[P_VMAX_GLNT] = p[P_VMAX_GLNT] * mon(c[M_EGLN], p[P_KM_EGLN]) * inh(p[P_KI_GLN], c[M_GLN]);
    v[P_VMAX_SAL] = p[P_VMAX_SAL] * mon(c[M_SER], p[P_KM_SER]);
    v[P_VMAX_fASTA] = p[P_VMAX_fASTA] * mon(c[M_ASP], p[P_KM_ASP]) * mon(c[M_AKG], p[P_KM_AKG]);
    v[P_VMAX_rASTA] = p[P_VMAX_rASTA] * mon(c[M_GLU], p[P_KM_GLU]) *
                      mon(c[M_OAA], p[P_KM_OAA]) * mon(c[M_NH4], p[P_KM_NH4]);
    v[P_VMAX_ASPT] = p[P_VMAX_ASPT] * mon(c[M_EASP], p[P_KM_EASP]);
    v[P_VMAX_ACL] = p[P_VMAX_ACL] * mon(c[M_CIT], p[P_KM_CIT]);
    v[P_VMAX_GROWTH] = p[P_VMAX_GROWTH] * mon(c[M_GLN], p[P_KM_GLN]) *
                       mon(c[M_GLC], p[P_KM_GLC]) * mon(c[M_GLU], p[P_KM_GLU]) *
                       mon(c[M_ALA], p[P_KM_ALA]) * mon(c[M_ASP], p[P_KM_ASP]) *
                       mon(c[M_SER], p[P_KM_SER]) * mon(c[M_GLY], p[P_KM_GLY]);
}

template <class S>
void net_fluxes_T(const std::array<S, kStateDim>& c, const std::array<S, kNumParams>& p,
                  std::array<S, kNumReactions>& vnet) {
    std::array<S, kNumRateLaws> v;
    rate_laws_T(c, p, v);
    for (int r = 0; r < kNumReactions; ++r) {
        vnet[r] = kNetFold[r].rev < 0 ? v[kNetFold[r].fwd] : v[kNetFold[r].fwd] - v[kNetFold[r].rev];
    }
}

template <class S>
void state_derivative_T(const std::array<S, kStateDim>& c, const std::array<S, kNumParams>& p,
                        const StoichiometryMatrix& stoich, const GrowthConstants& g,
                        std::array<S, kStateDim>& ds) {
    std::array<S, kNumReactions> vnet;
    net_fluxes_T(c, p, vnet);

    S mu = g.mu_max * (c[M_GLC] / (g.K_glc + c[M_GLC])) * (c[M_EGLN] / (g.K_glc + c[M_EGLN])) *
           (g.K_Ilac / (g.K_Ilac + c[M_ELAC]));
    S mu_d = g.k_d * (c[M_ELAC] / (c[M_ELAC] + g.K_Dlac));

    for (int i = 0; i < kStateDim; ++i) ds[i] = zero_like(c[0]);
    ds[M_X] = (mu - mu_d) * c[M_X];
    for (const StoichTriplet& t : stoich.triplets) ds[t.metabolite] = ds[t.metabolite] + t.coeff * vnet[t.reaction];
    for (int i = 1; i < kStateDim; ++i) ds[i] = ds[i] * c[M_X];
}

template <class S>
void check_state_T(const std::array<S, kStateDim>& c, int substep) {
    for (int i = 0; i < kStateDim; ++i) {
        double x = value_of(c[i]);
        if (!std::isfinite(x) || std::abs(x) > kDivergeCap) {
            char buf[128];
            std::snprintf(buf, sizeof(buf),
                          "diverged-simulation: metabolite index %d (%s) at substep %d", i,
                          MetaboliteLayout::names()[static_cast<size_t>(i)].c_str(), substep);
            throw DivergedError(buf, substep);
        }
    }
}

template <class S>
void integrate_T(const KineticsSpec& spec, std::array<S, kStateDim>& c,
                 const std::array<S, kNumParams>& p) {
    const double h = spec.dt_hours / spec.substeps;
    std::array<S, kStateDim> ds;
    for (int k = 0; k < spec.substeps; ++k) {
        state_derivative_T(c, p, spec.stoich, spec.growth, ds);
        for (int i = 0; i < kStateDim; ++i) c[i] = max_zero(c[i] + h * ds[i]);
        check_state_T(c, k);
    }
}

void require_valid_state(const Vec& state) {
    if (state.size() != kStateDim) {
        throw std::invalid_argument("invalid-state: expected " + std::to_string(kStateDim) +
                                    " entries, got " + std::to_string(state.size()));
    }
    for (int i = 0; i < kStateDim; ++i) {
        if (!(state[static_cast<size_t>(i)] >= 0.0) ||
            !std::isfinite(state[static_cast<size_t>(i)])) {
            throw std::invalid_argument(
                "invalid-state: entry " + std::to_string(i) + " (" +
                MetaboliteLayout::names()[static_cast<size_t>(i)] + ") is negative or non-finite");
        }
    }
}

struct ParamDefault {
    const char* name;
    double value;
};

constexpr std::array<ParamDefault, kNumParams> kParamDefaults = {{
    {"v_max.HK", 2.92},
    {"v_max.PGI", 1.43},
    {"v_max.PFK_ALD", 2.16},
    {"v_max.PGK", 4.00},
    {"v_max.PK", 3.98},
    {"v_max.fLDH", 3.28},
    {"v_max.rLDH", 0.80},
    {"v_max.PyrT", 0.17},
    {"v_max.fLacT", 2.97},
    {"v_max.rLacT", 0.05},
    {"v_max.OP", 0.01},
    {"v_max.NOP", 0.02},
    {"v_max.PDH", 0.22},
    {"v_max.CS", 0.43},
    {"v_max.fCITS_ISOD", 1.32},
    {"v_max.rCITS_ISOD", 0.30},
    {"v_max.AKGDH", 2.84},
    {"v_max.SDH", 0.32},
    {"v_max.fFUM", 0.32},
    {"v_max.rFUM", 0.10},
    {"v_max.fMDH", 1.44},
    {"v_max.rMDH", 0.45},
    {"v_max.ME", 0.51},
    {"v_max.PC", 0.06},
    {"v_max.fGLNS", 1.14},
    {"v_max.rGLNS", 0.30},
    {"v_max.fGLDH", 0.26},
    {"v_max.rGLDH", 0.09},
    {"v_max.fAlaTA", 0.82},
    {"v_max.rAlaTA", 0.25},
    {"v_max.AlaT", 0.47},
    {"v_max.GluT", 0.17},
    {"v_max.GlnT", 1.81},
    {"v_max.SAL", 0.01},
    {"v_max.fASTA", 0.34},
    {"v_max.rASTA", 0.12},
    {"v_max.AspT", 0.14},
    {"v_max.ACL", 0.11},
    {"v_max.growth", 0.05},
    {"K_m.GLC", 1.46},
    {"K_m.G6P", 0.25},
    {"K_m.F6P", 0.14},
    {"K_m.GAP", 0.09},
    {"K_m.PEP", 0.07},
    {"K_m.PYR", 0.21},
    {"K_m.LAC", 1.20},
    {"K_m.EPYR", 0.35},
    {"K_m.ELAC", 1.80},
    {"K_m.Ru5P", 0.02},
    {"K_m.AcCoA", 0.09},
    {"K_m.OAA", 0.08},
    {"K_m.CIT", 0.39},
    {"K_m.AKG", 2.92},
    {"K_m.SUC", 0.15},
    {"K_m.FUM", 0.13},
    {"K_m.MAL", 0.11},
    {"K_m.GLN", 0.26},
    {"K_m.GLU", 0.30},
    {"K_m.NH4", 0.17},
    {"K_m.ALA", 0.20},
    {"K_m.EGLN", 1.00},
    {"K_m.SER", 0.01},
    {"K_m.ASP", 0.22},
    {"K_m.EASP", 0.29},
    {"K_m.GLY", 0.35},
    {"K_i.G6P", 1.50},
    {"K_i.LAC_HK", 18.0},
    {"K_i.PYR", 0.80},
    {"K_i.LAC_PYRT", 15.0},
    {"K_i.LAC_GLNS", 20.0},
    {"K_i.GLN", 1.20},
    {"K_a.F6P", 0.05},
    {"K_a.GLN", 0.30},
}};

constexpr std::array<const char*, 20> kCase20 = {
    "v_max.HK", "v_max.PGI", "v_max.PFK_ALD", "v_max.PGK", "v_max.PK",
    "v_max.fLDH", "v_max.PyrT", "v_max.fLacT", "v_max.OP", "v_max.NOP",
    "v_max.PDH", "v_max.CS", "v_max.ME", "v_max.fMDH", "v_max.GlnT",
    "K_m.NH4", "K_m.ALA", "K_m.GLC", "K_m.GLN", "K_m.GLU",
};

constexpr std::array<const char*, 10> kCase30Extra = {
    "v_max.fCITS_ISOD", "v_max.AKGDH", "v_max.SDH", "v_max.fFUM", "v_max.PC",
    "v_max.fGLNS", "v_max.fGLDH", "v_max.fAlaTA", "v_max.AlaT", "v_max.GluT",
};

constexpr std::array<const char*, 10> kCase40Extra = {
    "K_m.SER", "v_max.SAL", "K_m.Ru5P", "K_m.PYR", "K_m.AcCoA",
    "K_m.OAA", "K_m.CIT", "K_m.AKG", "K_m.MAL", "K_m.EGLN",
};

}  // namespace

const std::array<std::string, kStateDim>& MetaboliteLayout::names() {
    static const std::array<std::string, kStateDim> kNames = {
        "X", "GLC", "G6P", "F6P", "GAP", "PEP", "PYR", "LAC", "ELAC", "EPYR",
        "Ru5P", "AcCoA", "CIT", "AKG", "SUC", "FUM", "MAL", "OAA",
        "GLN", "EGLN", "GLU", "ALA", "ASP", "EASP", "SER", "GLY", "NH4",
        "EALA", "EGLU", "ENH4", "ESER", "EGLY", "EASN", "EARG",
    };
    return kNames;
}

int MetaboliteLayout::index(const std::string& name) {
    const auto& ns = names();
    for (int i = 0; i < kStateDim; ++i) {
        if (ns[static_cast<size_t>(i)] == name) return i;
    }
    throw ConfigError("unknown metabolite name: " + name);
}

const std::array<std::string, kNumParams>& KineticParams::names() {
    static const std::array<std::string, kNumParams> kNames = [] {
        std::array<std::string, kNumParams> out;
        for (int i = 0; i < kNumParams; ++i) out[static_cast<size_t>(i)] = kParamDefaults[static_cast<size_t>(i)].name;
        return out;
    }();
    return kNames;
}

int KineticParams::index(const std::string& name) {
    const auto& ns = names();
    for (int i = 0; i < kNumParams; ++i) {
        if (ns[static_cast<size_t>(i)] == name) return i;
    }
    throw ConfigError("unknown kinetic parameter: " + name);
}

KineticParams KineticParams::defaults() {
    KineticParams p;
    for (int i = 0; i < kNumParams; ++i) {
        const double v = kParamDefaults[static_cast<size_t>(i)].value;
        p.value[static_cast<size_t>(i)] = v;
        p.lo[static_cast<size_t>(i)] = 1e-6 * v;
        p.hi[static_cast<size_t>(i)] = 8.0 * v;
    }
    p.set_case_mask(20);
    return p;
}

void KineticParams::set_case_mask(int case_size) {
    if (case_size != 20 && case_size != 30 && case_size != 40) {
        throw std::invalid_argument("calibration case size must be 20, 30 or 40, got " +
                                    std::to_string(case_size));
    }
    mask.fill(false);
    for (const char* n : kCase20) mask[static_cast<size_t>(index(n))] = true;
    if (case_size >= 30) {
        for (const char* n : kCase30Extra) mask[static_cast<size_t>(index(n))] = true;
    }
    if (case_size >= 40) {
        for (const char* n : kCase40Extra) mask[static_cast<size_t>(index(n))] = true;
    }
}

int KineticParams::masked_dim() const {
    return static_cast<int>(std::count(mask.begin(), mask.end(), true));
}

std::vector<int> KineticParams::masked_indices() const {
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(masked_dim()));
    for (int i = 0; i < kNumParams; ++i) {
        if (mask[static_cast<size_t>(i)]) idx.push_back(i);
    }
    return idx;
}

Vec KineticParams::masked_values() const {
    Vec beta;
    for (int i : masked_indices()) beta.push_back(value[static_cast<size_t>(i)]);
    return beta;
}

void KineticParams::set_masked_values(const Vec& beta) {
    const auto idx = masked_indices();
    if (beta.size() != idx.size()) {
        throw std::invalid_argument("masked parameter vector has size " +
                                    std::to_string(beta.size()) + ", expected " +
                                    std::to_string(idx.size()));
    }
    for (size_t k = 0; k < idx.size(); ++k) {
        if (!(beta[k] > 0.0) || !std::isfinite(beta[k])) {
            throw std::invalid_argument("kinetic parameters must be strictly positive (entry " +
                                        std::to_string(k) + ")");
        }
        value[static_cast<size_t>(idx[k])] = beta[k];
    }
}

void KineticParams::masked_bounds(Vec& lo_out, Vec& hi_out) const {
    lo_out.clear();
    hi_out.clear();
    for (int i : masked_indices()) {
        lo_out.push_back(lo[static_cast<size_t>(i)]);
        hi_out.push_back(hi[static_cast<size_t>(i)]);
    }
}

std::vector<std::string> KineticParams::masked_names() const {
    std::vector<std::string> out;
    for (int i : masked_indices()) out.push_back(names()[static_cast<size_t>(i)]);
    return out;
}

const std::array<std::string, kNumReactions>& reaction_names() {
    static const std::array<std::string, kNumReactions> kNames = {
        "HK", "PGI", "PFK_ALD", "PGK", "PK", "LDH", "PyrT", "LacT", "OP", "NOP",
        "PDH", "CS", "CITS_ISOD", "AKGDH", "SDH", "FUM", "MDH", "ME", "PC",
        "GLNS", "GLDH", "AlaTA", "AlaT", "GluT", "GlnT", "SAL", "ASTA", "AspT",
        "ACL", "growth",
    };
    return kNames;
}

int reaction_index(const std::string& name) {
    const auto& ns = reaction_names();
    for (int i = 0; i < kNumReactions; ++i) {
        if (ns[static_cast<size_t>(i)] == name) return i;
    }
    throw ConfigError("unknown reaction name: " + name);
}

StoichiometryMatrix StoichiometryMatrix::defaults() {
    StoichiometryMatrix m;
    auto add = [&m](int r, int met, double coeff) {
        m.triplets.push_back(StoichTriplet{r, met, coeff});
    };
    add(R_HK, M_GLC, -1);
    add(R_HK, M_G6P, 1);
    add(R_PGI, M_G6P, -1);
    add(R_PGI, M_F6P, 1);
    add(R_PFK_ALD, M_F6P, -1);
    add(R_PFK_ALD, M_GAP, 2);
    add(R_PGK, M_GAP, -1);
    add(R_PGK, M_PEP, 1);
    add(R_PK, M_PEP, -1);
    add(R_PK, M_PYR, 1);
    add(R_LDH, M_PYR, -1);
    add(R_LDH, M_LAC, 1);
    add(R_PYRT, M_EPYR, -1);
    add(R_PYRT, M_PYR, 1);
    add(R_LACT, M_LAC, -1);
    add(R_LACT, M_ELAC, 1);
    add(R_OP, M_G6P, -1);
    add(R_OP, M_RU5P, 1);
    add(R_NOP, M_RU5P, -3);
    add(R_NOP, M_F6P, 2);
    add(R_NOP, M_GAP, 1);
    add(R_PDH, M_PYR, -1);
    add(R_PDH, M_ACCOA, 1);
    add(R_CS, M_ACCOA, -1);
    add(R_CS, M_OAA, -1);
    add(R_CS, M_CIT, 1);
    add(R_CITS_ISOD, M_CIT, -1);
    add(R_CITS_ISOD, M_AKG, 1);
    add(R_AKGDH, M_AKG, -1);
    add(R_AKGDH, M_SUC, 1);
    add(R_SDH, M_SUC, -1);
    add(R_SDH, M_FUM, 1);
    add(R_FUM, M_FUM, -1);
    add(R_FUM, M_MAL, 1);
    add(R_MDH, M_MAL, -1);
    add(R_MDH, M_OAA, 1);
    add(R_ME, M_MAL, -1);
    add(R_ME, M_PYR, 1);
    add(R_PC, M_PYR, -1);
    add(R_PC, M_OAA, 1);
    add(R_GLNS, M_GLN, -1);
    add(R_GLNS, M_GLU, 1);
    add(R_GLNS, M_NH4, 1);
    add(R_GLDH, M_GLU, -1);
    add(R_GLDH, M_AKG, 1);
    add(R_GLDH, M_NH4, 1);
    add(R_ALATA, M_GLU, -1);
    add(R_ALATA, M_PYR, -1);
    add(R_ALATA, M_ALA, 1);
    add(R_ALATA, M_AKG, 1);
    add(R_ALAT, M_ALA, -1);
    add(R_ALAT, M_EALA, 1);
    add(R_GLUT, M_GLU, -1);
    add(R_GLUT, M_EGLU, 1);
    add(R_GLNT, M_EGLN, -1);
    add(R_GLNT, M_GLN, 1);
    add(R_SAL, M_SER, -1);
    add(R_SAL, M_GLY, 1);
    add(R_ASTA, M_ASP, -1);
    add(R_ASTA, M_AKG, -1);
    add(R_ASTA, M_GLU, 1);
    add(R_ASTA, M_OAA, 1);
    add(R_ASPT, M_EASP, -1);
    add(R_ASPT, M_ASP, 1);
    add(R_ACL, M_CIT, -1);
    add(R_ACL, M_ACCOA, 1);
    add(R_ACL, M_OAA, 1);
    // Biomass drain: consumes key nutrients in fixed ratios per unit of the
    // growth flux. Coefficients are configurable via the stoichiometry file.
    add(R_GROWTH, M_GLC, -1);
    add(R_GROWTH, M_GLN, -1);
    add(R_GROWTH, M_GLU, -1);
    add(R_GROWTH, M_ALA, -1);
    add(R_GROWTH, M_ASP, -1);
    add(R_GROWTH, M_SER, -1);
    add(R_GROWTH, M_GLY, -1);
    return m;
}

double StoichiometryMatrix::coeff(int reaction, int metabolite_state_index) const {
    double c = 0.0;
    for (const StoichTriplet& t : triplets) {
        if (t.reaction == reaction && t.metabolite == metabolite_state_index) c += t.coeff;
    }
    return c;
}

void StoichiometryMatrix::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open stoichiometry file for writing: " + path);
    out << "# reaction  metabolite  coefficient\n";
    for (const StoichTriplet& t : triplets) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s %s %.17g\n",
                      reaction_names()[static_cast<size_t>(t.reaction)].c_str(),
                      MetaboliteLayout::names()[static_cast<size_t>(t.metabolite)].c_str(),
                      t.coeff);
        out << buf;
    }
}

StoichiometryMatrix StoichiometryMatrix::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open stoichiometry file: " + path);
    StoichiometryMatrix m;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string rxn, met;
        double coeff;
        if (!(ss >> rxn)) continue;  // blank line
        if (!(ss >> met >> coeff)) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": expected 'reaction metabolite coefficient'");
        }
        std::string extra;
        if (ss >> extra) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": trailing token '" + extra +
                              "'");
        }
        const int r = reaction_index(rxn);
        const int metIdx = MetaboliteLayout::index(met);
        if (metIdx == M_X) {
            throw ConfigError(path + ":" + std::to_string(lineno) +
                              ": cell density cannot appear in the stoichiometry");
        }
        m.triplets.push_back(StoichTriplet{r, metIdx, coeff});
    }
    if (m.triplets.empty()) throw ConfigError(path + ": no stoichiometry entries");
    return m;
}

NoiseSpec NoiseSpec::from_initial_state(const Vec& s0, double frac, double floor) {
    NoiseSpec n;
    n.stddev.resize(s0.size());
    for (size_t i = 0; i < s0.size(); ++i) n.stddev[i] = std::max(frac * s0[i], floor);
    return n;
}

KineticsSpec KineticsSpec::defaults() {
    KineticsSpec spec;
    spec.params = KineticParams::defaults();
    spec.stoich = StoichiometryMatrix::defaults();
    // Intracellular pools sit near their quasi-steady levels under the default
    // rates, keeping the stiff relaxation transient (and hence the Euler
    // discretization error at the default substep count) small.
    spec.base_state = {
        0.05,  // X, 1e6 cells/mL units
        12.0,  // GLC
        1.0,   // G6P
        0.15,  // F6P
        0.11,  // GAP
        0.12,  // PEP
        0.31,  // PYR
        1.0,   // LAC
        0.0,   // ELAC
        0.4,   // EPYR
        0.025, // Ru5P
        0.12,  // AcCoA
        0.08,  // CIT
        0.7,   // AKG
        0.4,   // SUC
        0.17,  // FUM
        0.03,  // MAL
        0.09,  // OAA
        1.0,   // GLN
        4.0,   // EGLN
        1.0,   // GLU
        0.5,   // ALA
        0.4,   // ASP
        0.3,   // EASP
        0.4,   // SER
        0.4,   // GLY
        0.3,   // NH4
        0.2,   // EALA
        0.3,   // EGLU
        0.1,   // ENH4
        0.4,   // ESER
        0.3,   // EGLY
        0.3,   // EASN
        0.5,   // EARG
    };
    spec.noise = NoiseSpec::from_initial_state(spec.base_state, 0.05, 0.01);
    return spec;
}

Vec flux_rates(const Vec& state, const KineticParams& params) {
    require_valid_state(state);
    std::array<double, kStateDim> c;
    std::copy(state.begin(), state.end(), c.begin());
    std::array<double, kNumParams> p = params.value;
    std::array<double, kNumReactions> vnet;
    net_fluxes_T(c, p, vnet);
    return Vec(vnet.begin(), vnet.end());
}

std::pair<double, double> growth_rate(const Vec& state, const GrowthConstants& g) {
    require_valid_state(state);
    const double glc = state[M_GLC];
    const double egln = state[M_EGLN];
    const double elac = state[M_ELAC];
    const double mu = g.mu_max * (glc / (g.K_glc + glc)) * (egln / (g.K_glc + egln)) *
                      (g.K_Ilac / (g.K_Ilac + elac));
    const double mu_d = g.k_d * (elac / (elac + g.K_Dlac));
    return {mu, mu_d};
}

Vec apply_medium_exchange(const Vec& state, const Vec& fresh, double b) {
    if (!(b >= 0.0 && b <= 1.0)) {
        throw std::invalid_argument("exchange fraction must lie in [0, 1], got " +
                                    std::to_string(b));
    }
    if (state.size() != fresh.size()) {
        throw std::invalid_argument("state and fresh-medium profiles differ in size");
    }
    Vec out = state;
    for (size_t i = 1; i < out.size(); ++i) out[i] = b * fresh[i] + (1.0 - b) * state[i];
    return out;
}

Vec mean_transition(const KineticsSpec& spec, const Vec& state, double b) {
    require_valid_state(state);
    if (!(spec.dt_hours > 0.0) || spec.substeps < 1) {
        throw std::invalid_argument("integration settings require dt > 0 and substeps >= 1");
    }
    const Vec exchanged = apply_medium_exchange(state, spec.base_state, b);
    std::array<double, kStateDim> c;
    std::copy(exchanged.begin(), exchanged.end(), c.begin());
    std::array<double, kNumParams> p = spec.params.value;
    integrate_T(spec, c, p);
    return Vec(c.begin(), c.end());
}

Vec sample_transition(const KineticsSpec& spec, const Vec& state, double b, RngStream& rng) {
    Vec out = mean_transition(spec, state, b);
    for (size_t i = 0; i < out.size(); ++i) {
        out[i] = std::max(0.0, out[i] + rng.normal(0.0, spec.noise.stddev[i]));
    }
    return out;
}

double reward_raw(const KineticsSpec& spec, const Vec& prev_state, const ActionValue& a,
                  const Vec& next_state) {
    if (prev_state.size() != next_state.size() || prev_state.size() != kStateDim) {
        throw std::invalid_argument("reward states must both have dimension " +
                                    std::to_string(kStateDim));
    }
    const Vec baseline = apply_medium_exchange(prev_state, spec.base_state, a.b);
    const double d_x = next_state[M_X] - prev_state[M_X];
    const double d_lac = next_state[M_ELAC] - baseline[M_ELAC];
    const RewardConstants& rc = spec.reward;
    return rc.c_r * rc.yield_conversion * d_x - rc.c_m * a.b - rc.c_l * d_lac;
}

double reward_shifted(const KineticsSpec& spec, const Vec& prev_state, const ActionValue& a,
                      const Vec& next_state) {
    const RewardConstants& rc = spec.reward;
    const double raw = reward_raw(spec, prev_state, a, next_state);
    return std::max(0.0, raw + rc.c_m + rc.c_l * rc.lactate_cap);
}

KineticParams load_params(const std::string& path, KineticParams base) {
    KVConfig cfg = KVConfig::load(path);
    for (const std::string& key : cfg.keys()) {
        const int i = KineticParams::index(key);  // throws on unknown key
        const double v = cfg.get_num(key);
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw ConfigError(path + ": parameter " + key + " must be strictly positive");
        }
        base.value[static_cast<size_t>(i)] = v;
    }
    return base;
}

void save_params(const KineticParams& params, const std::string& path) {
    KVConfig cfg;
    const auto& ns = KineticParams::names();
    for (int i = 0; i < kNumParams; ++i) {
        cfg.set_num(ns[static_cast<size_t>(i)], params.value[static_cast<size_t>(i)]);
    }
    cfg.save(path);
}

void KineticsModel::mean_and_jacobian(const Vec& s, const ActionValue& a, Vec& f, Mat& jac) const {
    require_valid_state(s);
    const int n = spec_.params.masked_dim();
    if (n > Dual::kCapacity) {
        throw std::invalid_argument("masked parameter dimension exceeds derivative capacity");
    }
    const Vec exchanged = apply_medium_exchange(s, spec_.base_state, a.b);

    std::array<Dual, kStateDim> c;
    for (int i = 0; i < kStateDim; ++i) c[static_cast<size_t>(i)] = Dual::constant(exchanged[static_cast<size_t>(i)], n);
    std::array<Dual, kNumParams> p;
    for (int i = 0; i < kNumParams; ++i) {
        p[static_cast<size_t>(i)] = Dual::constant(spec_.params.value[static_cast<size_t>(i)], n);
    }
    const auto idx = spec_.params.masked_indices();
    for (int k = 0; k < n; ++k) {
        p[static_cast<size_t>(idx[static_cast<size_t>(k)])] =
            Dual::variable(spec_.params.value[static_cast<size_t>(idx[static_cast<size_t>(k)])], n, k);
    }
    integrate_T(spec_, c, p);

    f.resize(kStateDim);
    jac = Mat(kStateDim, n);
    for (int i = 0; i < kStateDim; ++i) {
        f[static_cast<size_t>(i)] = c[static_cast<size_t>(i)].v;
        for (int k = 0; k < n; ++k) jac(i, k) = c[static_cast<size_t>(i)].g[static_cast<size_t>(k)];
    }
}

Vec KineticsEnv::initial_state(RngStream& rng) const {
    const Vec& base = model_->spec().base_state;
    const double p = model_->spec().init_perturbation;
    Vec s(base.size());
    for (size_t i = 0; i < base.size(); ++i) s[i] = base[i] * rng.uniform(1.0 - p, 1.0 + p);
    return s;
}

}  // namespace actsim::kinetics
