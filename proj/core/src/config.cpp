#include "evlf/config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

#include "evlf/errors.hpp"
#include "evlf/tensor_io.hpp"

namespace evlf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad bool for " + key + ": '" + v + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(parse_u64(key, item));
    }
    return out;
}

std::string fmt_size_list(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

// One row per knob: name, setter from text, getter to text.
struct Field {
    const char* name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64("seed", v); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        {"dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; },
         [](const RunConfig& c) { return c.dataset; }},
        {"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
         [](const RunConfig& c) { return c.data_dir; }},
        {"cifar_classes",
         [](RunConfig& c, const std::string& v) { c.cifar_classes = parse_size_list("cifar_classes", v); },
         [](const RunConfig& c) { return fmt_size_list(c.cifar_classes); }},
        {"num_classes",
         [](RunConfig& c, const std::string& v) { c.num_classes = parse_u64("num_classes", v); },
         [](const RunConfig& c) { return std::to_string(c.num_classes); }},
        {"per_class",
         [](RunConfig& c, const std::string& v) { c.per_class = parse_u64("per_class", v); },
         [](const RunConfig& c) { return std::to_string(c.per_class); }},
        {"test_per_class",
         [](RunConfig& c, const std::string& v) { c.test_per_class = parse_u64("test_per_class", v); },
         [](const RunConfig& c) { return std::to_string(c.test_per_class); }},
        {"ipc", [](RunConfig& c, const std::string& v) { c.ipc = parse_u64("ipc", v); },
         [](const RunConfig& c) { return std::to_string(c.ipc); }},
        {"image_h", [](RunConfig& c, const std::string& v) { c.image_h = parse_u64("image_h", v); },
         [](const RunConfig& c) { return std::to_string(c.image_h); }},
        {"image_w", [](RunConfig& c, const std::string& v) { c.image_w = parse_u64("image_w", v); },
         [](const RunConfig& c) { return std::to_string(c.image_w); }},
        {"image_c", [](RunConfig& c, const std::string& v) { c.image_c = parse_u64("image_c", v); },
         [](const RunConfig& c) { return std::to_string(c.image_c); }},
        {"patch", [](RunConfig& c, const std::string& v) { c.patch = parse_u64("patch", v); },
         [](const RunConfig& c) { return std::to_string(c.patch); }},
        {"latent_c", [](RunConfig& c, const std::string& v) { c.latent_c = parse_u64("latent_c", v); },
         [](const RunConfig& c) { return std::to_string(c.latent_c); }},
        {"d", [](RunConfig& c, const std::string& v) { c.d = parse_u64("d", v); },
         [](const RunConfig& c) { return std::to_string(c.d); }},
        {"heads", [](RunConfig& c, const std::string& v) { c.heads = parse_u64("heads", v); },
         [](const RunConfig& c) { return std::to_string(c.heads); }},
        {"text_tokens",
         [](RunConfig& c, const std::string& v) { c.text_tokens = parse_u64("text_tokens", v); },
         [](const RunConfig& c) { return std::to_string(c.text_tokens); }},
        {"text_dim", [](RunConfig& c, const std::string& v) { c.text_dim = parse_u64("text_dim", v); },
         [](const RunConfig& c) { return std::to_string(c.text_dim); }},
        {"lambda1", [](RunConfig& c, const std::string& v) { c.lambda1 = parse_double("lambda1", v); },
         [](const RunConfig& c) { return fmt_double(c.lambda1); }},
        {"lambda2_start",
         [](RunConfig& c, const std::string& v) { c.lambda2_start = parse_double("lambda2_start", v); },
         [](const RunConfig& c) { return fmt_double(c.lambda2_start); }},
        {"lambda2_end",
         [](RunConfig& c, const std::string& v) { c.lambda2_end = parse_double("lambda2_end", v); },
         [](const RunConfig& c) { return fmt_double(c.lambda2_end); }},
        {"lambda2_ramp_epochs",
         [](RunConfig& c, const std::string& v) { c.lambda2_ramp_epochs = parse_u64("lambda2_ramp_epochs", v); },
         [](const RunConfig& c) { return std::to_string(c.lambda2_ramp_epochs); }},
        {"temperature",
         [](RunConfig& c, const std::string& v) { c.temperature = parse_double("temperature", v); },
         [](const RunConfig& c) { return fmt_double(c.temperature); }},
        {"lr_ca", [](RunConfig& c, const std::string& v) { c.lr_ca = parse_double("lr_ca", v); },
         [](const RunConfig& c) { return fmt_double(c.lr_ca); }},
        {"lr_proj", [](RunConfig& c, const std::string& v) { c.lr_proj = parse_double("lr_proj", v); },
         [](const RunConfig& c) { return fmt_double(c.lr_proj); }},
        {"weight_decay",
         [](RunConfig& c, const std::string& v) { c.weight_decay = parse_double("weight_decay", v); },
         [](const RunConfig& c) { return fmt_double(c.weight_decay); }},
        {"batch", [](RunConfig& c, const std::string& v) { c.batch = parse_u64("batch", v); },
         [](const RunConfig& c) { return std::to_string(c.batch); }},
        {"epochs_ca", [](RunConfig& c, const std::string& v) { c.epochs_ca = parse_u64("epochs_ca", v); },
         [](const RunConfig& c) { return std::to_string(c.epochs_ca); }},
        {"freeze_text_table",
         [](RunConfig& c, const std::string& v) { c.freeze_text_table = parse_bool("freeze_text_table", v); },
         [](const RunConfig& c) { return c.freeze_text_table ? std::string("true") : std::string("false"); }},
        {"ae_epochs", [](RunConfig& c, const std::string& v) { c.ae_epochs = parse_u64("ae_epochs", v); },
         [](const RunConfig& c) { return std::to_string(c.ae_epochs); }},
        {"lr_ae", [](RunConfig& c, const std::string& v) { c.lr_ae = parse_double("lr_ae", v); },
         [](const RunConfig& c) { return fmt_double(c.lr_ae); }},
        {"diffusion_steps",
         [](RunConfig& c, const std::string& v) { c.diffusion_steps = parse_u64("diffusion_steps", v); },
         [](const RunConfig& c) { return std::to_string(c.diffusion_steps); }},
        {"beta_min", [](RunConfig& c, const std::string& v) { c.beta_min = parse_double("beta_min", v); },
         [](const RunConfig& c) { return fmt_double(c.beta_min); }},
        {"beta_max", [](RunConfig& c, const std::string& v) { c.beta_max = parse_double("beta_max", v); },
         [](const RunConfig& c) { return fmt_double(c.beta_max); }},
        {"t_start", [](RunConfig& c, const std::string& v) { c.t_start = parse_u64("t_start", v); },
         [](const RunConfig& c) { return std::to_string(c.t_start); }},
        {"denoiser_train_steps",
         [](RunConfig& c, const std::string& v) { c.denoiser_train_steps = parse_u64("denoiser_train_steps", v); },
         [](const RunConfig& c) { return std::to_string(c.denoiser_train_steps); }},
        {"denoiser_ft_steps",
         [](RunConfig& c, const std::string& v) { c.denoiser_ft_steps = parse_u64("denoiser_ft_steps", v); },
         [](const RunConfig& c) { return std::to_string(c.denoiser_ft_steps); }},
        {"lr_denoiser",
         [](RunConfig& c, const std::string& v) { c.lr_denoiser = parse_double("lr_denoiser", v); },
         [](const RunConfig& c) { return fmt_double(c.lr_denoiser); }},
        {"denoiser_width",
         [](RunConfig& c, const std::string& v) { c.denoiser_width = parse_u64("denoiser_width", v); },
         [](const RunConfig& c) { return std::to_string(c.denoiser_width); }},
        {"denoiser_time_dim",
         [](RunConfig& c, const std::string& v) { c.denoiser_time_dim = parse_u64("denoiser_time_dim", v); },
         [](const RunConfig& c) { return std::to_string(c.denoiser_time_dim); }},
        {"denoiser_batch",
         [](RunConfig& c, const std::string& v) { c.denoiser_batch = parse_u64("denoiser_batch", v); },
         [](const RunConfig& c) { return std::to_string(c.denoiser_batch); }},
        {"synthesis_mode", [](RunConfig& c, const std::string& v) { c.synthesis_mode = v; },
         [](const RunConfig& c) { return c.synthesis_mode; }},
        {"finetune_denoiser",
         [](RunConfig& c, const std::string& v) { c.finetune_denoiser = parse_bool("finetune_denoiser", v); },
         [](const RunConfig& c) { return c.finetune_denoiser ? std::string("true") : std::string("false"); }},
        {"classifier_epochs",
         [](RunConfig& c, const std::string& v) { c.classifier_epochs = parse_u64("classifier_epochs", v); },
         [](const RunConfig& c) { return std::to_string(c.classifier_epochs); }},
        {"lr_classifier",
         [](RunConfig& c, const std::string& v) { c.lr_classifier = parse_double("lr_classifier", v); },
         [](const RunConfig& c) { return fmt_double(c.lr_classifier); }},
        {"classifier_width",
         [](RunConfig& c, const std::string& v) { c.classifier_width = parse_u64("classifier_width", v); },
         [](const RunConfig& c) { return std::to_string(c.classifier_width); }},
        {"num_seeds", [](RunConfig& c, const std::string& v) { c.num_seeds = parse_u64("num_seeds", v); },
         [](const RunConfig& c) { return std::to_string(c.num_seeds); }},
        {"coverage_k", [](RunConfig& c, const std::string& v) { c.coverage_k = parse_u64("coverage_k", v); },
         [](const RunConfig& c) { return std::to_string(c.coverage_k); }},
        {"coverage_space", [](RunConfig& c, const std::string& v) { c.coverage_space = v; },
         [](const RunConfig& c) { return c.coverage_space; }},
    };
    return table;
}

}  // namespace

void RunConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (dataset != "blobs" && dataset != "cifar10") fail("dataset must be blobs or cifar10");
    if (synthesis_mode != "decode" && synthesis_mode != "diffuse") fail("synthesis_mode must be decode or diffuse");
    if (coverage_space != "pixel" && coverage_space != "latent") fail("coverage_space must be pixel or latent");
    if (ipc == 0) fail("ipc must be >= 1");
    if (num_classes == 0 || per_class == 0) fail("class counts must be positive");
    if (image_h == 0 || image_w == 0 || image_c == 0) fail("image dims must be positive");
    if (patch == 0 || image_h % patch != 0 || image_w % patch != 0) fail("patch must divide image dims");
    if (latent_c == 0 || d == 0 || text_dim == 0 || text_tokens == 0) fail("fusion dims must be positive");
    if (heads == 0 || d % heads != 0) fail("d must be divisible by heads");
    if (lambda1 < 0 || lambda2_start < 0 || lambda2_end < 0) fail("loss weights must be nonnegative");
    if (lambda2_ramp_epochs == 0) fail("lambda2_ramp_epochs must be positive");
    if (temperature <= 0) fail("temperature must be positive");
    if (batch == 0 || epochs_ca == 0) fail("batch and epochs must be positive");
    if (diffusion_steps == 0) fail("diffusion_steps must be >= 1");
    if (!(beta_min > 0 && beta_min <= beta_max && beta_max < 1)) fail("betas must satisfy 0 < beta_min <= beta_max < 1");
    if (t_start > diffusion_steps) fail("t_start must be <= diffusion_steps");
    if (num_seeds == 0) fail("num_seeds must be >= 1");
    if (coverage_k == 0) fail("coverage_k must be >= 1");
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool found = false;
        for (const auto& f : fields()) {
            if (key == f.name) {
                f.set(cfg, value);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) {
        out += f.name;
        out += " = ";
        out += f.get(cfg);
        out += "\n";
    }
    return out;
}

void save_resolved_config(const std::filesystem::path& out_dir, const RunConfig& cfg) {
    std::filesystem::create_directories(out_dir);
    write_text_atomic(out_dir / "resolved_config", serialize_config(cfg));
}

std::uint64_t config_hash(const RunConfig& cfg) {
    const std::string text = serialize_config(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace evlf
