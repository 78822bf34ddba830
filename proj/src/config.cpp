#include "dsfnet/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dsf {
namespace {

namespace pt = boost::property_tree;

std::string trim(std::string s) {
  auto space = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), space));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), space).base(), s.end());
  return s;
}

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
  const std::string v = trim(text);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw std::runtime_error(key + ": cannot parse '" + text + "' as a number");
  return out;
}

bool parse_bool(const std::string& text, const std::string& key) {
  std::string v = trim(text);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw std::runtime_error(key + ": expected a boolean, got '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& key) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(item, key));
  if (out.empty()) throw std::runtime_error(key + ": empty list");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"run",
       {{"seed", [](RunConfig& c, const std::string& v, const std::string& k) { c.seed = parse_number<std::uint64_t>(v, k); }},
        {"iterations", [](RunConfig& c, const std::string& v, const std::string& k) { c.iterations = parse_number<int>(v, k); }},
        {"batch_size", [](RunConfig& c, const std::string& v, const std::string& k) { c.batch_size = parse_number<int>(v, k); }},
        {"checkpoint_every",
         [](RunConfig& c, const std::string& v, const std::string& k) { c.checkpoint_every = parse_number<int>(v, k); }},
        {"resume", [](RunConfig& c, const std::string& v, const std::string&) { c.resume = trim(v); }},
        {"precision",
         [](RunConfig& c, const std::string& v, const std::string& k) {
           const auto t = trim(v);
           if (t == "float" || t == "f32")
             c.precision = Precision::f32;
           else if (t == "double" || t == "f64")
             c.precision = Precision::f64;
           else
             throw std::runtime_error(k + ": expected float or double, got '" + v + "'");
         }}}},
      {"net",
       {{"in_channels", [](RunConfig& c, const std::string& v, const std::string& k) { c.net.in_channels = parse_number<Index>(v, k); }},
        {"channels", [](RunConfig& c, const std::string& v, const std::string& k) { c.net.channels = parse_list<Index>(v, k); }},
        {"alpha", [](RunConfig& c, const std::string& v, const std::string& k) { c.net.alpha = parse_number<Index>(v, k); }},
        {"width_divider",
         [](RunConfig& c, const std::string& v, const std::string& k) { c.net.width_divider = parse_number<Index>(v, k); }},
        {"kernel", [](RunConfig& c, const std::string& v, const std::string& k) { c.net.kernel = parse_number<Index>(v, k); }},
        {"attention", [](RunConfig& c, const std::string& v, const std::string& k) { c.net.attention = parse_bool(v, k); }},
        {"attention_per_stage",
         [](RunConfig& c, const std::string& v, const std::string& k) { c.net.attention_per_stage = parse_bool(v, k); }},
        {"attention_levels",
         [](RunConfig& c, const std::string& v, const std::string& k) { c.net.attention_levels = parse_number<Index>(v, k); }},
        {"attention_reduction",
         [](RunConfig& c, const std::string& v, const std::string& k) { c.net.attention_reduction = parse_number<Index>(v, k); }},
        {"pool_stages",
         [](RunConfig& c, const std::string& v, const std::string& k) { c.net.pool_stages = parse_number<Index>(v, k); }}}},
      {"optim",
       {{"lr", [](RunConfig& c, const std::string& v, const std::string& k) { c.optim.lr = parse_number<double>(v, k); }},
        {"momentum", [](RunConfig& c, const std::string& v, const std::string& k) { c.optim.momentum = parse_number<double>(v, k); }},
        {"weight_decay",
         [](RunConfig& c, const std::string& v, const std::string& k) { c.optim.weight_decay = parse_number<double>(v, k); }},
        {"milestones",
         [](RunConfig& c, const std::string& v, const std::string& k) { c.optim.milestones = parse_list<double>(v, k); }},
        {"factor", [](RunConfig& c, const std::string& v, const std::string& k) { c.optim.factor = parse_number<double>(v, k); }},
        {"schedule",
         [](RunConfig& c, const std::string& v, const std::string& k) {
           const auto t = trim(v);
           if (t == "cumulative")
             c.optim.schedule = Schedule::cumulative;
           else if (t == "single")
             c.optim.schedule = Schedule::single;
           else
             throw std::runtime_error(k + ": expected cumulative or single, got '" + v + "'");
         }}}},
      {"data",
       {{"source", [](RunConfig& c, const std::string& v, const std::string&) { c.data.source = trim(v); }},
        {"dir", [](RunConfig& c, const std::string& v, const std::string&) { c.data.dir = trim(v); }},
        {"count", [](RunConfig& c, const std::string& v, const std::string& k) { c.data.count = parse_number<int>(v, k); }},
        {"extent", [](RunConfig& c, const std::string& v, const std::string& k) { c.data.extent = parse_number<Index>(v, k); }},
        {"difficulty", [](RunConfig& c, const std::string& v, const std::string&) { c.data.difficulty = parse_difficulty(trim(v)); }}}},
      {"ablation",
       {{"sff", [](RunConfig& c, const std::string& v, const std::string& k) { c.sff = parse_bool(v, k); }},
        {"instant_conv", [](RunConfig& c, const std::string& v, const std::string& k) { c.instant_conv = parse_bool(v, k); }}}},
      {"output",
       {{"dir", [](RunConfig& c, const std::string& v, const std::string&) { c.output_dir = trim(v); }},
        {"trace", [](RunConfig& c, const std::string& v, const std::string&) { c.trace_file = trim(v); }},
        {"final", [](RunConfig& c, const std::string& v, const std::string&) { c.final_checkpoint = trim(v); }},
        {"best", [](RunConfig& c, const std::string& v, const std::string&) { c.best_checkpoint = trim(v); }}}},
  };
  return table;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? ", " : "") << xs[i];
  return os.str();
}

}  // namespace

RunConfig parse_run_config(std::istream& in, const std::string& origin) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::runtime_error(origin + ":" + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  const auto& table = setters();
  for (const auto& [section, body] : tree) {
    auto sec = table.find(section);
    if (body.empty() && (sec == table.end() || !body.data().empty()))
      throw std::runtime_error(origin + ": key '" + section + "' outside a [section]");
    if (sec == table.end()) throw std::runtime_error(origin + ": unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      auto set = sec->second.find(key);
      if (set == sec->second.end()) throw std::runtime_error(origin + ": unknown key '" + key + "' in [" + section + "]");
      try {
        set->second(cfg, value.data(), section + "." + key);
      } catch (const std::invalid_argument& e) {
        throw std::runtime_error(origin + ": " + e.what());
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(origin + ": " + e.what());
      }
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(origin + ": " + e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return parse_run_config(in, path.string());
}

void write_run_config(std::ostream& os, const RunConfig& c) {
  const auto b = [](bool v) { return v ? "true" : "false"; };
  os << std::setprecision(17);
  os << "[run]\nseed = " << c.seed << "\niterations = " << c.iterations << "\nbatch_size = " << c.batch_size
     << "\nprecision = " << (c.precision == Precision::f64 ? "double" : "float")
     << "\ncheckpoint_every = " << c.checkpoint_every << '\n';
  if (!c.resume.empty()) os << "resume = " << c.resume.string() << '\n';
  os << "\n[net]\nin_channels = " << c.net.in_channels << "\nchannels = " << join(c.net.channels)
     << "\nalpha = " << c.net.alpha << "\nwidth_divider = " << c.net.width_divider << "\nkernel = " << c.net.kernel
     << "\nattention = " << b(c.net.attention) << "\nattention_per_stage = " << b(c.net.attention_per_stage)
     << "\nattention_levels = " << c.net.attention_levels << "\nattention_reduction = " << c.net.attention_reduction
     << "\npool_stages = " << c.net.pool_stages << '\n';
  os << "\n[optim]\nlr = " << c.optim.lr << "\nmomentum = " << c.optim.momentum
     << "\nweight_decay = " << c.optim.weight_decay << "\nmilestones = " << join(c.optim.milestones)
     << "\nfactor = " << c.optim.factor
     << "\nschedule = " << (c.optim.schedule == Schedule::single ? "single" : "cumulative") << '\n';
  os << "\n[data]\nsource = " << c.data.source << '\n';
  if (!c.data.dir.empty()) os << "dir = " << c.data.dir.string() << '\n';
  os << "count = " << c.data.count << "\nextent = " << c.data.extent
     << "\ndifficulty = " << difficulty_name(c.data.difficulty) << '\n';
  os << "\n[ablation]\nsff = " << b(c.sff) << "\ninstant_conv = " << b(c.instant_conv) << '\n';
  os << "\n[output]\ndir = " << c.output_dir.string() << "\ntrace = " << c.trace_file
     << "\nfinal = " << c.final_checkpoint << "\nbest = " << c.best_checkpoint << '\n';
}

}  // namespace dsf
