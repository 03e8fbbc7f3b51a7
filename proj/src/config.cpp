#include "dyncontract/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dyncontract/format.hpp"

namespace dyncontract {

namespace {

struct Entry {
    std::string value;
    int line;
    bool used = false;
};

const std::map<std::string, std::set<std::string>> kGrammar = {
    {"model", {"utility", "rho", "normalization", "alpha", "delta", "eps_c"}},
    {"income", {"y", "p_l", "p_h"}},
    {"types", {"pi_ll", "pi_hh", "mu_l"}},
    {"signals", {"mode", "map"}},
    {"run", {"T", "V_l", "V_h", "tol", "ic_budget", "exploit_low_insurance", "commitment", "mechanism", "threads"}},
    {"sweep", {"parameter", "values", "from", "to", "steps"}},
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

class Table {
public:
    explicit Table(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(int line, const std::string& msg) const {
        throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
    }

    void parse(std::istream& is) {
        std::string raw, section;
        int line = 0;
        while (std::getline(is, raw)) {
            ++line;
            std::string s = raw;
            if (auto h = s.find('#'); h != std::string::npos)
                s.resize(h);
            s = trim(s);
            if (s.empty())
                continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    fail(line, "malformed section header");
                section = trim(s.substr(1, s.size() - 2));
                if (!kGrammar.count(section))
                    fail(line, "unknown section [" + section + "]");
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos)
                fail(line, "expected key = value");
            if (section.empty())
                fail(line, "key outside of a section");
            const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
            if (!kGrammar.at(section).count(key))
                fail(line, "unknown key " + section + "." + key);
            if (value.empty())
                fail(line, "empty value for " + section + "." + key);
            const std::string full = section + "." + key;
            if (entries_.count(full))
                fail(line, "duplicate key " + full);
            entries_[full] = {value, line};
        }
    }

    bool has(const std::string& k) const { return entries_.count(k) > 0; }

    const Entry& get(const std::string& k) {
        auto it = entries_.find(k);
        if (it == entries_.end())
            throw ConfigError(source_ + ": missing required key " + k);
        it->second.used = true;
        return it->second;
    }

    double number(const std::string& k) {
        const Entry& e = get(k);
        try {
            return parse_double(e.value, k);
        } catch (const ConfigError& err) {
            fail(e.line, err.what());
        }
    }

    double number_or(const std::string& k, double d) { return has(k) ? number(k) : d; }

    std::vector<double> list(const std::string& k) {
        const Entry& e = get(k);
        std::istringstream ss(e.value);
        std::vector<double> out;
        std::string tok;
        while (ss >> tok) {
            try {
                out.push_back(parse_double(tok, k));
            } catch (const ConfigError& err) {
                fail(e.line, err.what());
            }
        }
        return out;
    }

    std::string text(const std::string& k) { return get(k).value; }
    std::string text_or(const std::string& k, const std::string& d) { return has(k) ? text(k) : d; }

    bool flag_or(const std::string& k, bool d) {
        if (!has(k))
            return d;
        const Entry& e = get(k);
        if (e.value == "true")
            return true;
        if (e.value == "false")
            return false;
        fail(e.line, k + " must be true or false");
    }

    long long integer(const std::string& k) {
        const Entry& e = get(k);
        try {
            return parse_int(e.value, k);
        } catch (const ConfigError& err) {
            fail(e.line, err.what());
        }
    }

    int line_of(const std::string& k) const { return entries_.at(k).line; }

    void reject_unused() const {
        for (const auto& [k, e] : entries_)
            if (!e.used)
                fail(e.line, k + " does not apply to this configuration");
    }

private:
    std::string source_;
    std::map<std::string, Entry> entries_;
};

} // namespace

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        s[i] = digits[v & 15];
    return s;
}

ScenarioConfig parse_config(std::istream& is, const std::string& source) {
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string text = buf.str();
    Table tab(source);
    std::istringstream in(text);
    tab.parse(in);

    ScenarioConfig cfg;
    cfg.hash = fnv1a(text);

    const double delta = tab.number("model.delta");
    const std::string family = tab.text("model.utility");
    Preferences prefs = Preferences::crra(0.5, delta);
    if (family == "crra") {
        const std::string norm = tab.text_or("model.normalization", "power");
        if (norm != "power" && norm != "standard")
            tab.fail(tab.line_of("model.normalization"), "normalization must be power or standard");
        prefs = Preferences::crra(tab.number("model.rho"), delta,
                                  norm == "power" ? CrraNormalization::power : CrraNormalization::standard);
    } else if (family == "cara") {
        prefs = Preferences::cara(tab.number("model.alpha"), delta);
    } else {
        tab.fail(tab.line_of("model.utility"), "utility must be crra or cara");
    }
    if (tab.has("model.eps_c"))
        prefs.set_eps_c(tab.number("model.eps_c"));

    IncomeModel inc{tab.list("income.y"), tab.list("income.p_l"), tab.list("income.p_h")};
    if (inc.p_l.size() != inc.y.size() || inc.p_h.size() != inc.y.size())
        throw ConfigError(source + ": income.y, income.p_l and income.p_h need the same length");
    if (inc.y.empty())
        throw ConfigError(source + ": income.y is empty");

    TypeProcess tp;
    const double pll = tab.number("types.pi_ll"), phh = tab.number("types.pi_hh");
    const double mul = tab.number("types.mu_l");
    tp.transition = {{{pll, 1.0 - pll}, {1.0 - phh, phh}}};
    tp.pi_init = {mul, 1.0 - mul};

    SignalStructure sig = SignalStructure::realization_independent(inc.size());
    const std::string mode = tab.text_or("signals.mode", "ri");
    if (mode == "fc") {
        sig = SignalStructure::fully_contingent(inc.size());
    } else if (mode == "map") {
        std::vector<int> map;
        for (double v : tab.list("signals.map"))
            map.push_back(static_cast<int>(v));
        if (map.size() != inc.size())
            throw ConfigError(source + ": signals.map needs one entry per income level");
        sig = SignalStructure::from_map(map);
    } else if (mode != "ri") {
        tab.fail(tab.line_of("signals.mode"), "signals.mode must be ri, fc or map");
    }
    if (mode != "map" && tab.has("signals.map"))
        tab.fail(tab.line_of("signals.map"), "signals.map needs signals.mode = map");
    cfg.model = ModelPrimitives(prefs, tp, inc, sig);

    const long long T = tab.integer("run.T");
    if (T < 1 || T > 64)
        tab.fail(tab.line_of("run.T"), "run.T must be between 1 and 64");
    cfg.T = static_cast<int>(T);
    cfg.V_l = tab.text_or("run.V_l", cfg.V_l);
    cfg.V_h = tab.text_or("run.V_h", cfg.V_h);
    for (const auto& [k, v] : {std::pair{"run.V_l", cfg.V_l}, std::pair{"run.V_h", cfg.V_h}})
        if (tab.has(k)) {
            try {
                (void)resolve_target(default_fixture(), 1, v);
            } catch (const ConfigError& e) {
                tab.fail(tab.line_of(k), e.what());
            }
        }
    cfg.tol = tab.number_or("run.tol", cfg.tol);
    if (tab.has("run.ic_budget")) {
        const double b = tab.number("run.ic_budget");
        if (!(b >= 1.0))
            tab.fail(tab.line_of("run.ic_budget"), "run.ic_budget must be positive");
        cfg.ic_budget = static_cast<std::uint64_t>(b);
    }
    cfg.exploit_low_insurance = tab.flag_or("run.exploit_low_insurance", true);
    cfg.commitment = tab.flag_or("run.commitment", false);
    cfg.mechanism = tab.text_or("run.mechanism", "");
    if (tab.has("run.threads")) {
        const long long n = tab.integer("run.threads");
        if (n < 1)
            tab.fail(tab.line_of("run.threads"), "run.threads must be positive");
        cfg.threads = static_cast<int>(n);
    }

    if (tab.has("sweep.parameter")) {
        SweepSpec sw;
        sw.parameter = tab.text("sweep.parameter");
        if (sw.parameter != "V_h" && sw.parameter != "mu_l" && sw.parameter != "rho")
            tab.fail(tab.line_of("sweep.parameter"), "sweep.parameter must be V_h, mu_l or rho");
        if (tab.has("sweep.values")) {
            sw.values = tab.list("sweep.values");
        } else if (tab.has("sweep.from") || tab.has("sweep.to") || tab.has("sweep.steps")) {
            const double a = tab.number("sweep.from"), b = tab.number("sweep.to");
            const long long n = tab.integer("sweep.steps");
            if (n < 1)
                tab.fail(tab.line_of("sweep.steps"), "sweep.steps must be positive");
            for (long long i = 0; i < n; ++i)
                sw.values.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
        }
        cfg.sweep = std::move(sw);
    } else if (tab.has("sweep.values") || tab.has("sweep.from")) {
        throw ConfigError(source + ": sweep section needs sweep.parameter");
    }
    tab.reject_unused();
    return cfg;
}

ScenarioConfig load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw ConfigError("cannot open config file " + path);
    return parse_config(f, path);
}

double resolve_target(const ModelPrimitives& model, int T, const std::string& expr) {
    if (expr == "fi_l")
        return full_info_utility(model, Type::low, T).V;
    if (expr == "fi_h")
        return full_info_utility(model, Type::high, T).V;
    if (expr == "outside_l")
        return outside_option(model, Type::low, T);
    if (expr == "outside_h")
        return outside_option(model, Type::high, T);
    if (expr == "mid")
        return 0.5 * (full_info_utility(model, Type::low, T).V + full_info_utility(model, Type::high, T).V);
    return parse_double(expr, "target utility");
}

} // namespace dyncontract
