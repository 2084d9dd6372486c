#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "coarse/harness.hpp"

namespace coarse::harness {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    size_t start = 0;
    for (;;) {
        const size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open file: " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write file: " + path);
    return out;
}

}  // namespace

void save_population(const Population& pop, const std::string& path) {
    auto out = open_out(path);
    const int d = pop.dims();
    out << "# upper_bounds=";
    for (int k = 0; k < d; ++k) out << (k ? "," : "") << util::dtos(pop.upper_bound(k));
    out << "\n";
    if (!pop.space().unit_labels.empty()) {
        out << "# unit_labels=";
        for (int k = 0; k < d; ++k)
            out << (k ? "," : "") << pop.space().unit_labels[k];
        out << "\n";
    }
    out << "id";
    for (int k = 0; k < d; ++k) out << ",alpha_" << (k + 1);
    for (int k = 0; k < d; ++k) out << ",beta_" << (k + 1);
    for (int k = 0; k < d; ++k) out << ",cost_scale_" << (k + 1);
    for (int c = 0; c < pop.covariate_count(); ++c) out << ",x_" << (c + 1);
    out << "\n";
    for (int64_t i = 0; i < pop.size(); ++i) {
        out << pop.ids()[i];
        for (int k = 0; k < d; ++k) out << ',' << util::dtos(pop.alpha(k)[i]);
        for (int k = 0; k < d; ++k) out << ',' << util::dtos(pop.beta(k)[i]);
        for (int k = 0; k < d; ++k) out << ',' << util::dtos(pop.cost_scale(k)[i]);
        for (int c = 0; c < pop.covariate_count(); ++c)
            out << ',' << util::dtos(pop.covariate_row(i)[c]);
        out << "\n";
    }
}

Population load_population(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    int64_t line_no = 0;

    std::vector<double> upper_bounds;
    std::vector<std::string> unit_labels;
    std::string header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const std::string meta = trim(line.substr(1));
            if (meta.rfind("upper_bounds=", 0) == 0)
                for (auto f : split(std::string_view(meta).substr(13)))
                    upper_bounds.push_back(util::parse_double(trim(f)));
            else if (meta.rfind("unit_labels=", 0) == 0)
                for (auto f : split(std::string_view(meta).substr(12)))
                    unit_labels.emplace_back(trim(f));
            continue;
        }
        header = line;
        break;
    }
    if (header.empty()) throw data_error(path + ": missing header row");
    if (upper_bounds.empty())
        throw data_error(path + ": missing '# upper_bounds=' metadata line");

    const auto cols = split(header);
    const int d = static_cast<int>(upper_bounds.size());
    const size_t fixed = 1 + 3 * static_cast<size_t>(d);
    if (cols.size() < fixed || trim(cols[0]) != "id")
        throw data_error(path + ": header must be id,alpha_1..,beta_1..,cost_scale_1..");
    for (int k = 0; k < d; ++k) {
        if (trim(cols[1 + k]) != "alpha_" + std::to_string(k + 1) ||
            trim(cols[1 + d + k]) != "beta_" + std::to_string(k + 1) ||
            trim(cols[1 + 2 * d + k]) != "cost_scale_" + std::to_string(k + 1))
            throw data_error(path + ": header column order does not match the schema");
    }
    const int covariates = static_cast<int>(cols.size() - fixed);

    Population pop(TreatmentSpace{upper_bounds, unit_labels});
    std::unordered_set<std::string> seen;
    Individual ind;
    ind.alpha.resize(d);
    ind.beta.resize(d);
    ind.cost_scale.resize(d);
    ind.covariates.resize(covariates);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split(line);
        if (fields.size() != cols.size())
            throw data_error(path + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(cols.size()) + " fields, got " +
                             std::to_string(fields.size()));
        ind.id = trim(fields[0]);
        if (!seen.insert(ind.id).second)
            throw data_error(path + ":" + std::to_string(line_no) + ": duplicate id '" +
                             ind.id + "'");
        try {
            for (int k = 0; k < d; ++k) {
                ind.alpha[k] = util::parse_double(trim(fields[1 + k]));
                ind.beta[k] = util::parse_double(trim(fields[1 + d + k]));
                ind.cost_scale[k] = util::parse_double(trim(fields[1 + 2 * d + k]));
            }
            for (int c = 0; c < covariates; ++c)
                ind.covariates[c] = util::parse_double(trim(fields[fixed + c]));
            pop.add(ind);
        } catch (const data_error& e) {
            throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pop;
}

void save_arm_estimates(const calibrate::ArmEstimates& arms, const std::string& path) {
    auto out = open_out(path);
    out << "id,dim,level,cate\n";
    for (int64_t i = 0; i < arms.size(); ++i)
        for (int d = 0; d < arms.dims(); ++d) {
            const size_t k = arms.levels[d].size();
            for (size_t j = 0; j < k; ++j)
                out << arms.ids[i] << ',' << (d + 1) << ',' << util::dtos(arms.levels[d][j])
                    << ',' << util::dtos(arms.values[d][i * k + j]) << "\n";
        }
}

calibrate::ArmEstimates load_arm_estimates(const std::string& path) {
    auto in = open_in(path);
    std::string line;
    int64_t line_no = 1;
    if (!std::getline(in, line) || trim(line) != "id,dim,level,cate")
        throw data_error(path + ": expected header 'id,dim,level,cate'");

    // first pass in memory: discover ids (in first-seen order), dims, levels
    struct Row {
        std::string id;
        int dim;
        double level, cate;
    };
    std::vector<Row> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != 4)
            throw data_error(path + ":" + std::to_string(line_no) + ": expected 4 fields");
        try {
            rows.push_back({trim(f[0]), static_cast<int>(util::parse_int(trim(f[1]))) - 1,
                            util::parse_double(trim(f[2])), util::parse_double(trim(f[3]))});
        } catch (const data_error& e) {
            throw data_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (rows.back().dim < 0)
            throw data_error(path + ":" + std::to_string(line_no) + ": dim must be >= 1");
    }
    if (rows.empty()) throw data_error(path + ": no data rows");

    calibrate::ArmEstimates arms;
    std::unordered_map<std::string, int64_t> id_index;
    int dims = 0;
    for (const auto& r : rows) dims = std::max(dims, r.dim + 1);
    arms.levels.resize(dims);
    for (const auto& r : rows) {
        if (id_index.emplace(r.id, static_cast<int64_t>(arms.ids.size())).second)
            arms.ids.push_back(r.id);
        auto& lv = arms.levels[r.dim];
        if (std::find(lv.begin(), lv.end(), r.level) == lv.end()) lv.push_back(r.level);
    }
    const int64_t n = arms.size();
    arms.values.resize(dims);
    std::vector<std::vector<uint8_t>> filled(dims);
    for (int d = 0; d < dims; ++d) {
        arms.values[d].assign(n * arms.levels[d].size(),
                              std::numeric_limits<double>::quiet_NaN());
        filled[d].assign(n * arms.levels[d].size(), 0);
    }
    for (const auto& r : rows) {
        const auto& lv = arms.levels[r.dim];
        const size_t j = std::find(lv.begin(), lv.end(), r.level) - lv.begin();
        const int64_t i = id_index.at(r.id);
        const size_t slot = i * lv.size() + j;
        if (filled[r.dim][slot])
            throw data_error(path + ": duplicate (id, dim, level) row for id '" + r.id + "'");
        arms.values[r.dim][slot] = r.cate;
        filled[r.dim][slot] = 1;
    }
    for (int d = 0; d < dims; ++d)
        for (size_t s = 0; s < filled[d].size(); ++s)
            if (!filled[d][s])
                throw data_error(path + ": id '" + arms.ids[s / arms.levels[d].size()] +
                                 "' is missing an arm estimate in dimension " +
                                 std::to_string(d + 1));
    arms.validate();
    return arms;
}

std::vector<std::vector<double>> load_cost_scales(const std::string& path, int dims,
                                                  const std::vector<std::string>& ids) {
    auto in = open_in(path);
    std::string line;
    int64_t line_no = 1;
    if (!std::getline(in, line)) throw data_error(path + ": empty file");
    const auto header = split(line);
    if (header.size() != static_cast<size_t>(dims) + 1 || trim(header[0]) != "id")
        throw data_error(path + ": expected header id,cost_scale_1.." +
                         std::to_string(dims));

    std::unordered_map<std::string, int64_t> id_index;
    for (size_t i = 0; i < ids.size(); ++i) id_index.emplace(ids[i], i);
    const int64_t n = static_cast<int64_t>(ids.size());
    std::vector<std::vector<double>> scales(
        dims, std::vector<double>(n, std::numeric_limits<double>::quiet_NaN()));

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != static_cast<size_t>(dims) + 1)
            throw data_error(path + ":" + std::to_string(line_no) + ": wrong field count");
        const auto it = id_index.find(trim(f[0]));
        if (it == id_index.end()) continue;  // ids outside the arm file are ignored
        for (int d = 0; d < dims; ++d) {
            const std::string cell = trim(f[1 + d]);
            if (cell.empty()) continue;  // missing: imputed below
            const double v = util::parse_double(cell);
            if (!(v > 0.0))
                throw data_error(path + ":" + std::to_string(line_no) +
                                 ": cost scale must be > 0");
            scales[d][it->second] = v;
        }
    }

    // median imputation per dimension for never-promoted individuals
    for (int d = 0; d < dims; ++d) {
        std::vector<double> present;
        for (double v : scales[d])
            if (!std::isnan(v)) present.push_back(v);
        if (present.empty())
            throw data_error(path + ": dimension " + std::to_string(d + 1) +
                             " has no cost scales to impute from");
        std::sort(present.begin(), present.end());
        const double median = present.size() % 2 == 1
                                  ? present[present.size() / 2]
                                  : 0.5 * (present[present.size() / 2 - 1] +
                                           present[present.size() / 2]);
        for (double& v : scales[d])
            if (std::isnan(v)) v = median;
    }
    return scales;
}

void save_policy(const PolicyFile& file, const std::string& path) {
    nlohmann::ordered_json j;
    j["schema"] = "policy-v1";
    j["upper_bounds"] = file.space.upper_bounds;
    if (!file.space.unit_labels.empty()) j["unit_labels"] = file.space.unit_labels;
    j["seed"] = file.seed;
    j["config"] = file.config_echo;
    auto& ts = j["treatments"] = nlohmann::ordered_json::array();
    for (const auto& t : file.policy.treatments)
        ts.push_back({{"dim", t.dim + 1}, {"value", t.value}});
    j["masses"] = file.policy.masses;
    j["holdout_count"] = file.policy.holdout_count;
    j["assignment"] = file.policy.assignment;
    auto out = open_out(path);
    out << j.dump(1) << "\n";
}

PolicyFile load_policy(const std::string& path) {
    auto in = open_in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(path + ": " + e.what());
    }
    try {
        PolicyFile file;
        file.space.upper_bounds = j.at("upper_bounds").get<std::vector<double>>();
        if (j.contains("unit_labels"))
            file.space.unit_labels = j.at("unit_labels").get<std::vector<std::string>>();
        file.seed = j.at("seed").get<uint64_t>();
        file.config_echo = j.at("config").get<std::string>();
        for (const auto& t : j.at("treatments"))
            file.policy.treatments.push_back(
                {t.at("dim").get<int32_t>() - 1, t.at("value").get<double>()});
        file.policy.masses = j.at("masses").get<std::vector<double>>();
        file.policy.holdout_count = j.at("holdout_count").get<int64_t>();
        file.policy.assignment = j.at("assignment").get<std::vector<int32_t>>();
        return file;
    } catch (const nlohmann::json::exception& e) {
        throw data_error(path + ": " + e.what());
    }
}

void save_trace(const lloyd::SolveTrace& trace, const std::string& path) {
    auto out = open_out(path);
    for (const auto& it : trace.iterations) {
        nlohmann::ordered_json j;
        j["iteration"] = it.iteration;
        auto& ts = j["treatments"] = nlohmann::ordered_json::array();
        for (const auto& t : it.treatments)
            ts.push_back({{"dim", t.dim + 1}, {"value", t.value}});
        j["squared_regret"] = it.squared_regret;
        j["total_profit"] = it.total_profit;
        j["cell_counts"] = it.cell_counts;
        out << j.dump() << "\n";
    }
    nlohmann::ordered_json tail;
    tail["termination_reason"] = trace.termination_reason;
    tail["winning_start"] = trace.winning_start;
    out << tail.dump() << "\n";
}

}  // namespace coarse::harness
