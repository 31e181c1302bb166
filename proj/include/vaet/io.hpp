// io.hpp: CSV/JSON emission with atomic writes and cleanup on failure.

#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "vaet/bath.hpp"
#include "vaet/common.hpp"
#include "vaet/observables.hpp"

namespace vaet {

inline constexpr const char* kVersion = "1.0.0";

inline std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Writes via a temporary file and rename so readers never see partial files.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot write '" + tmp.string() + "'");
        f << content;
        f.flush();
        if (!f) throw DataError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw DataError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

// Tracks files produced by one command; removes them unless committed.
class OutputSet {
public:
    explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw DataError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }
    OutputSet(const OutputSet&) = delete;
    OutputSet& operator=(const OutputSet&) = delete;
    ~OutputSet() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& p : written_) std::filesystem::remove(p, ec);
    }

    std::filesystem::path path(const std::string& name) const { return dir_ / name; }

    std::filesystem::path write(const std::string& name, const std::string& content) {
        const auto p = dir_ / name;
        write_atomic(p, content);
        written_.push_back(p);
        return p;
    }
    // Registers a file written incrementally elsewhere (kept on failure if keep).
    void track(const std::filesystem::path& p) { written_.push_back(p); }
    void commit() { committed_ = true; }
    const std::vector<std::filesystem::path>& files() const { return written_; }

private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> written_;
    bool committed_{false};
};

inline std::string trace_csv(const PopulationTrace& p) {
    std::ostringstream o;
    o << "t_ps,P_D,P_A,re_coh,im_coh\n";
    for (std::size_t i = 0; i < p.size(); ++i)
        o << fmt17(p.t[i]) << ',' << fmt17(p.P_D[i]) << ',' << fmt17(p.P_A[i]) << ',' << fmt17(p.coh_re[i]) << ','
          << fmt17(p.coh_im[i]) << '\n';
    return o.str();
}

inline std::string kernels_csv(const CorrelationTable& c, const KernelTable& k) {
    std::ostringstream o;
    o << "t,ReC,ImC,Reg0,Img0,Reg1,Img1,Reg2,Img2\n";
    for (std::size_t i = 0; i < c.size(); ++i)
        o << fmt17(c.dt * double(i)) << ',' << fmt17(c.values[i].real()) << ',' << fmt17(c.values[i].imag()) << ','
          << fmt17(k.g0[i].real()) << ',' << fmt17(k.g0[i].imag()) << ',' << fmt17(k.g1[i].real()) << ','
          << fmt17(k.g1[i].imag()) << ',' << fmt17(k.g2[i].real()) << ',' << fmt17(k.g2[i].imag()) << '\n';
    return o.str();
}

inline nlohmann::json fit_json(const RateFit& f) {
    return {{"k_rel_ps_inv", f.k_rel}, {"P_inf", f.P_inf}, {"t0_ps", f.t0},   {"t_end_ps", f.t_end},
            {"r2", f.r_squared},      {"n_points", f.n_points}, {"flags", f.flags}};
}

inline nlohmann::json metadata_json(const std::string& command, const std::string& config_text,
                                    std::uint64_t master_seed, const std::string& recipe) {
    nlohmann::json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["master_seed"] = master_seed;
    j["recipe"] = recipe;
    j["config"] = config_text;
    return j;
}

} // namespace vaet
