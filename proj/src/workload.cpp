#include "npudse/workload.hpp"

#include <algorithm>

namespace npudse::workload {

std::string to_string(OpKind k) {
  switch (k) {
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Matmul: return "matmul";
    case OpKind::Elementwise: return "elementwise";
    case OpKind::Pooling: return "pooling";
  }
  return "?";
}

OpKind op_kind_from_string(const std::string& s) {
  if (s == "conv2d") return OpKind::Conv2d;
  if (s == "matmul") return OpKind::Matmul;
  if (s == "elementwise") return OpKind::Elementwise;
  if (s == "pooling") return OpKind::Pooling;
  throw InputError("unknown operator kind '" + s + "'");
}

const OperatorSpec* ModelGraph::producer_of(const std::string& tensor) const {
  for (const auto& op : operators)
    for (const auto& o : op.outputs)
      if (o == tensor) return &op;
  return nullptr;
}

std::vector<const OperatorSpec*> ModelGraph::consumers_of(
    const std::string& tensor) const {
  std::vector<const OperatorSpec*> out;
  for (const auto& op : operators)
    for (const auto& i : op.inputs)
      if (i == tensor) { out.push_back(&op); break; }
  return out;
}

namespace {

const std::vector<long>& shape_of(const ModelGraph& g, const std::string& t,
                                  const std::string& node) {
  auto it = g.tensors.find(t);
  if (it == g.tensors.end())
    throw InputError("node '" + node + "': references undeclared tensor '" +
                     t + "'");
  return it->second;
}

long attr_of(const OperatorSpec& op, const std::string& key, long dflt = -1) {
  auto it = op.attrs.find(key);
  if (it != op.attrs.end()) return it->second;
  if (dflt >= 0) return dflt;
  throw InputError("node '" + op.name + "': missing attribute '" + key + "'");
}

void check_conv_axis(const OperatorSpec& op, long in, long k, long stride,
                     long out, const char* axis) {
  if (stride < 1 || k < 1)
    throw InputError("node '" + op.name + "': nonpositive kernel/stride");
  if (in < k || (in - k) % stride != 0 || (in - k) / stride + 1 != out)
    throw InputError("node '" + op.name + "': shape mismatch on " + axis +
                     " axis: (" + std::to_string(in) + "-" +
                     std::to_string(k) + ")/" + std::to_string(stride) +
                     "+1 != " + std::to_string(out));
}

void validate_operator(const OperatorSpec& op, const ModelGraph& g) {
  switch (op.kind) {
    case OpKind::Matmul: {
      if (op.inputs.size() != 2 || op.outputs.size() != 1)
        throw InputError("node '" + op.name + "': matmul needs 2 inputs, 1 output");
      const auto& a = shape_of(g, op.inputs[0], op.name);
      const auto& b = shape_of(g, op.inputs[1], op.name);
      const auto& c = shape_of(g, op.outputs[0], op.name);
      if (a.size() != 2 || b.size() != 2 || c.size() != 2)
        throw InputError("node '" + op.name + "': matmul tensors must be rank 2");
      // A[M,K] x B[K,N] = C[M,N]
      if (a[1] != b[0] || a[0] != c[0] || b[1] != c[1])
        throw InputError("node '" + op.name + "': shape mismatch in matmul " +
                         op.inputs[0] + " x " + op.inputs[1]);
      break;
    }
    case OpKind::Conv2d: {
      if (op.inputs.size() != 2 || op.outputs.size() != 1)
        throw InputError("node '" + op.name + "': conv2d needs 2 inputs, 1 output");
      const auto& in = shape_of(g, op.inputs[0], op.name);    // [N,C,H,W]
      const auto& w = shape_of(g, op.inputs[1], op.name);     // [K,C,R,S]
      const auto& out = shape_of(g, op.outputs[0], op.name);  // [N,K,P,Q]
      if (in.size() != 4 || w.size() != 4 || out.size() != 4)
        throw InputError("node '" + op.name + "': conv2d tensors must be rank 4");
      if (in[1] != w[1] || in[0] != out[0] || w[0] != out[1])
        throw InputError("node '" + op.name + "': shape mismatch in conv2d channels");
      long sy = attr_of(op, "stride_h", 1), sx = attr_of(op, "stride_w", 1);
      check_conv_axis(op, in[2], w[2], sy, out[2], "Y");
      check_conv_axis(op, in[3], w[3], sx, out[3], "X");
      break;
    }
    case OpKind::Elementwise: {
      size_t want = (op.ew_op == "add") ? 2 : 1;
      if (op.ew_op != "relu" && op.ew_op != "add")
        throw InputError("node '" + op.name + "': unknown elementwise op '" +
                         op.ew_op + "'");
      if (op.inputs.size() != want || op.outputs.size() != 1)
        throw InputError("node '" + op.name + "': elementwise arity mismatch");
      const auto& a = shape_of(g, op.inputs[0], op.name);
      const auto& c = shape_of(g, op.outputs[0], op.name);
      if (a != c)
        throw InputError("node '" + op.name + "': shape mismatch, elementwise in/out differ");
      if (op.ew_op == "add") {
        const auto& b = shape_of(g, op.inputs[1], op.name);
        if (b != a)
          throw InputError("node '" + op.name + "': shape mismatch, add operands differ");
      }
      break;
    }
    case OpKind::Pooling: {
      if (op.inputs.size() != 1 || op.outputs.size() != 1)
        throw InputError("node '" + op.name + "': pooling needs 1 input, 1 output");
      const auto& in = shape_of(g, op.inputs[0], op.name);
      const auto& out = shape_of(g, op.outputs[0], op.name);
      if (in.size() != 4 || out.size() != 4 || in[0] != out[0] || in[1] != out[1])
        throw InputError("node '" + op.name + "': pooling tensors must be rank 4 with matching N,C");
      long kh = attr_of(op, "kernel_h"), kw = attr_of(op, "kernel_w");
      check_conv_axis(op, in[2], kh, attr_of(op, "stride_h", 1), out[2], "Y");
      check_conv_axis(op, in[3], kw, attr_of(op, "stride_w", 1), out[3], "X");
      break;
    }
  }
  for (const auto& [k, v] : op.attrs)
    if (v < 1)
      throw InputError("node '" + op.name + "': attribute '" + k +
                       "' must be a positive integer");
}

void validate_graph(const ModelGraph& g) {
  // acyclicity + unique producers via Kahn-style pass over tensor deps
  std::map<std::string, int> produced;
  for (const auto& op : g.operators) {
    for (const auto& o : op.outputs) {
      if (g.tensors.find(o) == g.tensors.end())
        throw InputError("node '" + op.name + "': references undeclared tensor '" + o + "'");
      if (++produced[o] > 1)
        throw InputError("tensor '" + o + "' has multiple producers");
    }
  }
  std::set<std::string> ready;
  for (const auto& [t, _] : g.tensors)
    if (!produced.count(t)) ready.insert(t);
  std::vector<const OperatorSpec*> pending;
  for (const auto& op : g.operators) pending.push_back(&op);
  bool progress = true;
  while (progress && !pending.empty()) {
    progress = false;
    for (auto it = pending.begin(); it != pending.end();) {
      bool ok = std::all_of((*it)->inputs.begin(), (*it)->inputs.end(),
                            [&](const std::string& t) { return ready.count(t) > 0; });
      if (ok) {
        for (const auto& o : (*it)->outputs) ready.insert(o);
        it = pending.erase(it);
        progress = true;
      } else {
        ++it;
      }
    }
  }
  if (!pending.empty())
    throw InputError("model graph is cyclic or has unsatisfied inputs (node '" +
                     pending.front()->name + "')");
  for (const auto& op : g.operators) validate_operator(op, g);
}

}  // namespace

ModelGraph parse_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed model document: ") + e.what());
  }
  if (!j.is_object()) throw InputError("malformed model document: not an object");
  if (require_field(j, "version", "model").get<int>() != 1)
    throw InputError("model: unsupported schema version");
  ModelGraph g;
  for (const auto& [name, shape] : require_field(j, "tensors", "model").items()) {
    std::vector<long> s = shape.get<std::vector<long>>();
    for (long e : s)
      if (e < 1) throw InputError("tensor '" + name + "': nonpositive extent");
    g.tensors[name] = s;
  }
  for (const auto& jo : require_field(j, "operators", "model")) {
    OperatorSpec op;
    op.name = require_field(jo, "name", "operator").get<std::string>();
    op.kind = op_kind_from_string(
        require_field(jo, "kind", "node '" + op.name + "'").get<std::string>());
    if (jo.contains("op")) op.ew_op = jo["op"].get<std::string>();
    if (jo.contains("attributes"))
      for (const auto& [k, v] : jo["attributes"].items())
        op.attrs[k] = v.get<long>();
    op.inputs = require_field(jo, "inputs", "node '" + op.name + "'")
                    .get<std::vector<std::string>>();
    op.outputs = require_field(jo, "outputs", "node '" + op.name + "'")
                     .get<std::vector<std::string>>();
    if (jo.contains("epilogue"))
      for (const auto& je : jo["epilogue"])
        op.epilogue.push_back({je.at("op").get<std::string>(),
                               je.value("aux", std::string())});
    g.operators.push_back(std::move(op));
  }
  validate_graph(g);
  return g;
}

std::string serialize_model(const ModelGraph& g) {
  json j;
  j["version"] = 1;
  j["tensors"] = json::object();
  for (const auto& [t, s] : g.tensors) j["tensors"][t] = s;
  j["operators"] = json::array();
  for (const auto& op : g.operators) {
    json jo;
    jo["name"] = op.name;
    jo["kind"] = to_string(op.kind);
    if (!op.ew_op.empty()) jo["op"] = op.ew_op;
    if (!op.attrs.empty()) {
      jo["attributes"] = json::object();
      for (const auto& [k, v] : op.attrs) jo["attributes"][k] = v;
    }
    jo["inputs"] = op.inputs;
    jo["outputs"] = op.outputs;
    if (!op.epilogue.empty()) {
      jo["epilogue"] = json::array();
      for (const auto& e : op.epilogue) {
        json je;
        je["op"] = e.op;
        if (!e.aux.empty()) je["aux"] = e.aux;
        jo["epilogue"].push_back(je);
      }
    }
    j["operators"].push_back(jo);
  }
  return j.dump(2);
}

ModelGraph fuse_operators(const ModelGraph& g) {
  ModelGraph out = g;
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t ei = 0; ei < out.operators.size(); ++ei) {
      const OperatorSpec& ew = out.operators[ei];
      if (ew.kind != OpKind::Elementwise) continue;
      const std::string& src = ew.inputs[0];
      const OperatorSpec* prod = out.producer_of(src);
      if (!prod) continue;
      if (prod->kind != OpKind::Conv2d && prod->kind != OpKind::Matmul)
        continue;
      if (out.consumers_of(src).size() != 1) continue;
      // the aux input of a binary op must not itself be the producer's output
      std::string aux = (ew.inputs.size() > 1) ? ew.inputs[1] : std::string();
      if (aux == src) continue;
      size_t pi = static_cast<size_t>(prod - out.operators.data());
      out.operators[pi].epilogue.push_back({ew.ew_op, aux});
      out.operators[pi].outputs = ew.outputs;
      out.operators.erase(out.operators.begin() + ei);
      changed = true;
      break;
    }
  }
  return out;
}

long OperatorNest::bound(const std::string& label) const {
  for (const auto& [l, b] : dims)
    if (l == label) return b;
  throw InputError("nest '" + name + "': unknown dim '" + label + "'");
}

bool OperatorNest::has_dim(const std::string& label) const {
  for (const auto& [l, b] : dims)
    if (l == label) return true;
  return false;
}

std::set<std::string> OperatorNest::operand_dims(Operand o) const {
  std::set<std::string> s;
  for (const auto& e : operands[static_cast<size_t>(o)]) {
    s.insert(e.a);
    if (e.is_window()) s.insert(e.b);
  }
  return s;
}

long OperatorNest::total_macs() const {
  long p = 1;
  for (const auto& [_, b] : dims) p *= b;
  return p;
}

OperatorNest lower_to_nest(const OperatorSpec& op, const ModelGraph& g) {
  OperatorNest nest;
  nest.name = op.name;
  nest.epilogue = op.epilogue;
  switch (op.kind) {
    case OpKind::Matmul: {
      const auto& a = g.tensors.at(op.inputs[0]);
      const auto& b = g.tensors.at(op.inputs[1]);
      nest.dims = {{"M", a[0]}, {"N", b[1]}, {"K", a[1]}};
      nest.operands[0] = {{"M"}, {"K"}};          // input A[M,K]
      nest.operands[1] = {{"K"}, {"N"}};          // weight B[K,N]
      nest.operands[2] = {{"M"}, {"N"}};          // output C[M,N]
      nest.reduction = {"K"};
      return nest;
    }
    case OpKind::Conv2d: {
      const auto& in = g.tensors.at(op.inputs[0]);
      const auto& w = g.tensors.at(op.inputs[1]);
      const auto& out = g.tensors.at(op.outputs[0]);
      long sy = op.attrs.count("stride_h") ? op.attrs.at("stride_h") : 1;
      long sx = op.attrs.count("stride_w") ? op.attrs.at("stride_w") : 1;
      nest.dims = {{"N", in[0]}, {"K", w[0]}, {"C", in[1]}, {"Y", out[2]},
                   {"X", out[3]}, {"R", w[2]}, {"S", w[3]}};
      nest.operands[0] = {{"N"}, {"C"}, {"Y", sy, "R"}, {"X", sx, "S"}};
      nest.operands[1] = {{"K"}, {"C"}, {"R"}, {"S"}};
      nest.operands[2] = {{"N"}, {"K"}, {"Y"}, {"X"}};
      nest.reduction = {"C", "R", "S"};
      return nest;
    }
    default:
      throw InputError("node '" + op.name + "': unsupported kind '" +
                       to_string(op.kind) + "' for loop-nest lowering");
  }
}

}  // namespace npudse::workload
