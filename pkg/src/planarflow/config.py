"""Run configuration: INI sections with typed keys and per-command defaults.

Complex values are written ``re+imi`` (``1+2i``, ``-0.5i``, ``3``).  Lists
are comma separated.  ``[run]`` holds execution settings (output directory,
worker count) and is left out of the configuration hash, so changing the
worker count does not change the hash or any data file.
"""

import configparser
from dataclasses import dataclass
import hashlib
import json
import os

from .errors import ParameterError

OUT_ENV = "PLANARFLOW_OUT"

COMMANDS = ("simulate", "boundary", "derivative", "identity-check", "moments", "j-moments",
            "loewner-trace", "hull", "hcap", "corner-demo", "phi-estimate")


class ConfigError(ParameterError):
    pass


def parse_complex(text):
    s = text.strip().replace(" ", "").lower()
    if not s or "j" in s:
        raise ValueError(f"not a complex literal: {text!r}")
    if s.endswith("i"):
        body = s[:-1]
        if body == "" or body[-1] in "+-":
            body += "1"
        s = body + "j"
    return complex(s)


def format_complex(z):
    z = complex(z)
    return f"{z.real!r}{'+' if z.imag >= 0 else '-'}{abs(z.imag)!r}i"


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    t = text.strip().lower()
    return None if t in ("", "none", "auto") else float(t)


def _list(conv):
    def parse(text):
        items = [x for x in (p.strip() for p in text.split(",")) if x]
        return [conv(x) for x in items]
    return parse


def _atoms(text):
    out = []
    for item in (p.strip() for p in text.split(",")):
        if not item:
            continue
        x, w = item.split(":")
        out.append((float(x), float(w)))
    return out


# section -> key -> (parser, default text)
SCHEMA = {
    "run": {
        "out_dir": (str, ""),
        "workers": (int, "1"),
    },
    "field": {
        "kind": (str, "power"),
        "alpha": (float, "0.5"),
        "kappa": (float, "2"),
        "c": (parse_complex, "0+1i"),
        "C": (float, "0"),
        "D": (float, "0"),
        "atoms": (_atoms, ""),
        "shift": (float, "0"),
        "iterate": (int, "0"),
    },
    "driver": {
        "kind": (str, "brownian"),
        "seed": (int, "0"),
        "scale": (float, "1"),
        "t0": (float, "0"),
        "t1": (float, "1"),
        "step": (float, "1e-3"),
        "values": (_list(float), ""),
    },
    "experiment": {
        "s": (float, "0"),
        "t": (float, "1"),
        "z": (_list(parse_complex), "0+1i"),
        "w": (_list(parse_complex), "1+1i"),
        "a": (float, "-1"),
        "b": (float, "1"),
        "n": (int, "100"),
        "delta": (_opt_float, "auto"),
        "max_levels": (int, "12"),
        "scheme": (str, "heun"),
        "p": (float, "2"),
        "axis": (str, "time-t"),
        "lags": (_list(float), "0.001,0.002,0.003,0.004,0.006,0.009,0.013,0.02"),
        "direction": (parse_complex, "1"),
        "n_paths": (int, "2000"),
        "master_seed": (int, "0"),
        "theta_nodes": (int, "16"),
        "compensate_qv": (_bool, "true"),
        "fd_h": (float, "1e-6"),
        "times": (_list(float), "0.25,1"),
        "eps": (_opt_float, "auto"),
        "probe_radius": (float, "100"),
        "re_min": (float, "-2"),
        "re_max": (float, "2"),
        "im_max": (float, "3"),
        "nx": (int, "41"),
        "ny": (int, "30"),
        "center": (float, "0"),
        "windows": (_list(float), "0.2,0.1,0.05,0.025,0.0125,0.00625,0.003125,0.0015625"),
        "refine_factor": (int, "2"),
        "per_side": (int, "20"),
        "lambda": (_list(float), "10"),
        "horizon": (_opt_float, "auto"),
        "fd_step": (float, "1e-2"),
    },
    "emit": {
        "csv": (_bool, "true"),
        "json": (_bool, "true"),
        "svg": (_bool, "true"),
        "png": (_bool, "true"),
    },
}

# per-command overrides of the schema defaults
COMMAND_DEFAULTS = {
    "boundary": {"driver": {"kind": "zero"}},
    "loewner-trace": {"driver": {"kind": "zero", "step": "1e-4"}},
    "hull": {"driver": {"kind": "zero", "step": "1e-3"}},
    "hcap": {"driver": {"kind": "zero", "step": "1e-4"}, "experiment": {"times": "0.25,0.5,1"}},
    "corner-demo": {"driver": {"seed": "13", "step": "0.01"}},
    "moments": {"field": {"kind": "constant"}, "experiment": {"t": "0.5"}},
    "j-moments": {"field": {"kind": "constant"}, "experiment": {"t": "0.5"}},
    "phi-estimate": {"experiment": {"n_paths": "500"}},
    "derivative": {"driver": {"step": "1e-4"}},
    "identity-check": {"driver": {"step": "1e-4"}, "experiment": {"z": "-1,0+1i", "w": "1,1+1i"}},
}


def _to_json(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (list, tuple)):
        return [_to_json(x) for x in v]
    return v


@dataclass
class RunConfig:
    command: str
    sections: dict

    def __getitem__(self, section):
        return self.sections[section]

    @property
    def out_dir(self):
        d = self.sections["run"]["out_dir"]
        return d or os.environ.get(OUT_ENV, "planarflow-out")

    @property
    def workers(self):
        return self.sections["run"]["workers"]

    def canonical(self):
        """JSON-ready form of everything except the execution settings."""
        body = {sec: {k: _to_json(v) for k, v in sorted(vals.items())}
                for sec, vals in sorted(self.sections.items()) if sec != "run"}
        return {"command": self.command, **body}

    def digest(self):
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def default_text(command):
    """The default configuration of ``command`` as INI text."""
    over = COMMAND_DEFAULTS.get(command, {})
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, (_, d) in keys.items():
            lines.append(f"{k} = {over.get(sec, {}).get(k, d)}")
        lines.append("")
    return "\n".join(lines)


def load_config(command, path=None, text=None, overrides=()):
    """Parse and validate a configuration; errors name the offending key."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
    if text is not None:
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config text: {exc}") from exc
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        sec, k = key.strip().split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, k, value.strip())
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for k in cp[sec]:
            if k not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{k}")
    over = COMMAND_DEFAULTS.get(command, {})
    sections = {}
    for sec, keys in SCHEMA.items():
        vals = {}
        for k, (conv, d) in keys.items():
            raw = cp.get(sec, k, fallback=None) if cp.has_section(sec) else None
            if raw is None:
                raw = over.get(sec, {}).get(k, d)
            try:
                vals[k] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{sec}.{k}: cannot parse {raw!r} ({exc})") from None
        sections[sec] = vals
    cfg = RunConfig(command, sections)
    _validate(cfg)
    return cfg


def _validate(cfg):
    f, d, e = cfg["field"], cfg["driver"], cfg["experiment"]
    if f["kind"] not in ("power", "herglotz", "inversion", "constant"):
        raise ConfigError(f"field.kind: unknown field kind {f['kind']!r}")
    if d["kind"] not in ("brownian", "zero", "custom"):
        raise ConfigError(f"driver.kind: unknown driver kind {d['kind']!r}")
    if not d["step"] > 0:
        raise ConfigError(f"driver.step: must be > 0, got {d['step']}")
    if not d["t1"] > d["t0"]:
        raise ConfigError("driver.t1: must exceed driver.t0")
    if d["kind"] == "custom" and len(d["values"]) < 2:
        raise ConfigError("driver.values: a custom driver needs at least two values")
    if cfg["run"]["workers"] < 1:
        raise ConfigError("run.workers: must be >= 1")
    if e["scheme"] not in ("heun", "euler"):
        raise ConfigError(f"experiment.scheme: unknown scheme {e['scheme']!r}")
    if e["axis"] not in ("time-s", "time-t", "space"):
        raise ConfigError(f"experiment.axis: unknown axis {e['axis']!r}")
    for k in ("n", "n_paths", "theta_nodes", "nx", "ny", "per_side"):
        if e[k] < 1:
            raise ConfigError(f"experiment.{k}: must be >= 1")
    if any(z.imag < 0 for z in e["z"] + e["w"]):
        raise ConfigError("experiment.z/w: points must lie in the closed upper half-plane")
    if f["shift"] < 0:
        raise ConfigError("field.shift: must be >= 0")
