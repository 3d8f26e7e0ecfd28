"""Synthetic dataset generation.

Families are defined by grammars: ordered caller/callee pair motifs that act
as the family signature, plus junk-call noise. Offline grammar synthesis is
the default path so every benchmark run is reproducible without network
access; an optional client can delegate generation to a chat-completion HTTP
service, with all network output forced through the same automated filter.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import yaml

from .core import Dataset, Embedding, Trace, Vocabulary
from .errors import AugmentError, InvalidConfig, InvalidGrammar, InvalidInput, ShapeError

ROOT_CALLER = "_main_"

Pair = tuple[str, str]
Motif = tuple[Pair, ...]

# Callee pool shared across families: the usual webshell staples.
_SHARED_CALLEES = (
    "base64_decode", "gzinflate", "str_rot13", "eval", "assert", "system",
    "exec", "shell_exec", "passthru", "popen", "proc_open", "fopen", "fwrite",
    "fread", "fclose", "file_get_contents", "file_put_contents", "unlink",
    "chmod", "curl_init", "curl_setopt", "curl_exec", "curl_close",
    "fsockopen", "zend_compile_string", "zend_compile_file",
    "zend_fetch_r_post", "zend_fetch_r_get", "zend_fetch_r_cookie",
    "zend_fetch_r_server", "move_uploaded_file", "extract", "parse_str",
    "stripslashes", "urldecode", "rawurldecode", "gzuncompress", "gzdecode",
    "base64_encode", "create_function",
)

# Region partitioned round-robin into per-family exclusive tokens.
_PRIVATE_CALLEES = (
    "openssl_decrypt", "openssl_encrypt", "mcrypt_decrypt", "hash_hmac",
    "random_bytes", "uniqid", "mysqli_connect", "mysqli_query",
    "mysqli_fetch_assoc", "pg_connect", "pg_query", "sqlite_open",
    "session_start", "session_destroy", "setcookie", "header", "mail",
    "socket_create", "socket_connect", "socket_write", "socket_read",
    "stream_socket_client", "stream_context_create", "scandir", "opendir",
    "readdir", "closedir", "is_dir", "mkdir", "rmdir", "copy", "rename",
    "tempnam", "sys_get_temp_dir", "touch", "symlink", "readlink", "realpath",
    "glob", "ini_set", "ini_get", "set_time_limit", "ignore_user_abort",
    "getenv", "putenv", "posix_getpwuid", "posix_getuid", "posix_kill",
    "pcntl_fork", "pcntl_exec", "disk_free_space", "disk_total_space",
    "filemtime", "filesize", "fileperms", "stat", "lstat", "chown", "chgrp",
    "umask", "getcwd", "chdir", "escapeshellarg", "escapeshellcmd",
    "proc_close", "proc_get_status", "dl", "apache_get_modules",
    "get_loaded_extensions", "function_exists", "class_exists",
    "get_defined_functions", "token_get_all", "highlight_file", "show_source",
    "serialize", "unserialize", "json_decode", "json_encode", "ob_start",
    "ob_get_clean", "ob_end_flush", "register_shutdown_function",
    "call_user_func", "call_user_func_array", "array_map", "preg_replace",
    "preg_match", "preg_match_all", "preg_split", "convert_uudecode",
    "quoted_printable_decode", "html_entity_decode", "htmlspecialchars_decode",
    "pack", "unpack", "dechex", "hexdec", "crc32", "crypt", "password_hash",
    "levenshtein", "phpinfo", "flock", "feof", "fgets", "fputs", "rewind",
    "ftruncate", "fflush", "usleep",
)

# Neutral noise calls: junk insertions draw callees from here.
_JUNK_CALLEES = (
    "trim", "ltrim", "rtrim", "strlen", "substr", "strtolower", "strtoupper",
    "sprintf", "implode", "explode", "str_replace", "strpos", "strrev",
    "in_array", "array_keys", "array_values", "count", "is_string",
    "is_array", "intval", "chr", "ord", "microtime", "date", "time",
    "memory_get_usage", "error_reporting", "number_format",
)


def _check_token(tok: str, where: str) -> None:
    if not isinstance(tok, str) or not tok or any(ch.isspace() for ch in tok):
        raise InvalidGrammar(f"{where}: bad token {tok!r}")


@dataclass(frozen=True)
class FamilyGrammar:
    """Generative signature of one family.

    ``core_motifs`` is the family's behavioral fingerprint: every generated
    trace contains each motif's caller/callee pairs in order (as a
    subsequence of its pair stream). Mutation rates control junk-pair
    insertion, junk deletion, and cross-motif adjacent swaps.
    """

    family_id: int
    core_motifs: tuple[Motif, ...]
    junk_pool: tuple[str, ...] = ()
    p_ins: float = 0.0
    p_del: float = 0.0
    p_swap: float = 0.0
    vocabulary: frozenset[str] | None = None

    def __post_init__(self):
        if self.family_id < 1:
            raise InvalidGrammar(f"family_id must be positive, got {self.family_id}")
        motifs = tuple(tuple((str(c), str(e)) for c, e in m) for m in self.core_motifs)
        object.__setattr__(self, "core_motifs", motifs)
        object.__setattr__(self, "junk_pool", tuple(self.junk_pool))
        if not motifs or any(len(m) == 0 for m in motifs):
            raise InvalidGrammar(f"family {self.family_id}: core_motifs must be non-empty")
        for m in motifs:
            for c, e in m:
                _check_token(c, f"family {self.family_id} motif caller")
                _check_token(e, f"family {self.family_id} motif callee")
        for tok in self.junk_pool:
            _check_token(tok, f"family {self.family_id} junk")
        rates = (self.p_ins, self.p_del, self.p_swap)
        if any(not (0.0 <= r <= 1.0) for r in rates) or sum(rates) > 1.0 + 1e-12:
            raise InvalidGrammar(f"family {self.family_id}: mutation rates {rates} invalid")
        if self.p_ins > 0 and not self.junk_pool:
            raise InvalidGrammar(f"family {self.family_id}: p_ins > 0 requires a junk pool")
        own = self.own_tokens()
        if self.vocabulary is None:
            object.__setattr__(self, "vocabulary", frozenset(own))
        else:
            object.__setattr__(self, "vocabulary", frozenset(self.vocabulary))
            missing = own - self.vocabulary
            if missing:
                raise InvalidGrammar(
                    f"family {self.family_id}: tokens outside generator vocabulary: {sorted(missing)[:5]}"
                )

    def own_tokens(self) -> set[str]:
        toks = set(self.junk_pool)
        for m in self.core_motifs:
            for c, e in m:
                toks.add(c)
                toks.add(e)
        return toks


def synthetic_vocabulary(grammars: Iterable[FamilyGrammar]) -> Vocabulary:
    """Vocabulary over every token the given grammars can emit (min_count 1)."""
    counts: Counter = Counter()
    for g in grammars:
        counts.update(g.own_tokens())
    if not counts:
        raise InvalidInput("no grammars supplied")
    return Vocabulary(counts, min_count=1)


def _mint_md5(*parts) -> str:
    return hashlib.md5("|".join(str(p) for p in parts).encode("utf-8")).hexdigest()


def _mutate(
    stream: list[tuple[Pair, int]],
    junk_pool: tuple[str, ...],
    p_ins: float,
    p_del: float,
    p_swap: float,
    rng: np.random.Generator,
) -> list[tuple[Pair, int]]:
    """Apply junk insertion, junk deletion, and cross-motif swaps.

    Stream items are ((caller, callee), motif_id); junk gets unique negative
    ids. Insertions land only at pair boundaries and borrow the following
    pair's caller (trace root at the tail) so call context stays consistent.
    Deletions touch only junk; swaps only cross different motif ids, which
    preserves every motif as a subsequence.
    """
    out: list[tuple[Pair, int]] = []
    junk_seq = 0
    if p_ins > 0:
        for pair, mid in stream:
            if rng.random() < p_ins:
                junk = junk_pool[int(rng.integers(len(junk_pool)))]
                junk_seq += 1
                out.append(((pair[0], junk), -junk_seq))
            out.append((pair, mid))
        if rng.random() < p_ins:
            junk = junk_pool[int(rng.integers(len(junk_pool)))]
            junk_seq += 1
            out.append(((stream[0][0][0], junk), -junk_seq))
    else:
        out = list(stream)
    if p_del > 0:
        out = [it for it in out if it[1] >= 0 or rng.random() >= p_del]
    if p_swap > 0:
        for i in range(len(out) - 1):
            if out[i][1] != out[i + 1][1] and rng.random() < p_swap:
                out[i], out[i + 1] = out[i + 1], out[i]
    return out


def _flatten(stream: list[tuple[Pair, int]]) -> tuple[str, ...]:
    calls: list[str] = []
    for (caller, callee), _ in stream:
        calls.append(caller)
        calls.append(callee)
    return tuple(calls)


def generate_family(grammar: FamilyGrammar, n: int, seed: int) -> list[Trace]:
    """Emit ``n`` traces of the family, deterministic under (grammar, n, seed)."""
    if n < 1:
        raise InvalidInput(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    base = [
        (pair, mid) for mid, motif in enumerate(grammar.core_motifs) for pair in motif
    ]
    traces = []
    for i in range(n):
        stream = _mutate(base, grammar.junk_pool, grammar.p_ins, grammar.p_del, grammar.p_swap, rng)
        calls = _flatten(stream)
        traces.append(
            Trace(
                filemd5=_mint_md5("intra", grammar.family_id, seed, i, " ".join(calls)),
                calls=calls,
                family=grammar.family_id,
                provenance="synthetic-intra",
            )
        )
    return traces


def blend_families(
    ga: FamilyGrammar,
    gb: FamilyGrammar,
    n: int,
    seed: int,
    family: int = -1,
) -> list[Trace]:
    """Interleave motifs from two parents into new-family or outlier traces."""
    if ga.family_id == gb.family_id:
        raise InvalidInput(f"blend parents must differ, both are family {ga.family_id}")
    if n < 1:
        raise InvalidInput(f"n must be >= 1, got {n}")
    if family != -1 and family < 1:
        raise InvalidInput(f"blend label must be -1 or positive, got {family}")
    rng = np.random.default_rng(seed)
    junk = tuple(dict.fromkeys(ga.junk_pool + gb.junk_pool))
    p_ins = (ga.p_ins + gb.p_ins) / 2.0
    p_del = (ga.p_del + gb.p_del) / 2.0
    p_swap = (ga.p_swap + gb.p_swap) / 2.0
    offset = len(ga.core_motifs)
    traces = []
    for i in range(n):
        picked_a = [mi for mi in range(len(ga.core_motifs)) if rng.random() < 0.5]
        if not picked_a:
            picked_a = [int(rng.integers(len(ga.core_motifs)))]
        picked_b = [mi for mi in range(len(gb.core_motifs)) if rng.random() < 0.5]
        if not picked_b:
            picked_b = [int(rng.integers(len(gb.core_motifs)))]
        sa = [(pair, mi) for mi in picked_a for pair in ga.core_motifs[mi]]
        sb = [(pair, offset + mi) for mi in picked_b for pair in gb.core_motifs[mi]]
        merged: list[tuple[Pair, int]] = []
        ia = ib = 0
        while ia < len(sa) or ib < len(sb):
            ra, rb = len(sa) - ia, len(sb) - ib
            if rb == 0 or (ra > 0 and rng.random() < ra / (ra + rb)):
                merged.append(sa[ia])
                ia += 1
            else:
                merged.append(sb[ib])
                ib += 1
        if p_ins > 0 and not junk:
            p_ins = 0.0
        stream = _mutate(merged, junk, p_ins, p_del, p_swap, rng)
        calls = _flatten(stream)
        traces.append(
            Trace(
                filemd5=_mint_md5("blend", ga.family_id, gb.family_id, seed, i, " ".join(calls)),
                calls=calls,
                family=family,
                provenance="synthetic-blend",
            )
        )
    return traces


REASON_EMPTY = "empty calls"
REASON_BAD_NAME = "invalid function name"
REASON_LENGTH = "length out of range"
REASON_MALFORMED = "malformed"


def automated_filter(
    candidates: Iterable[Trace | dict],
    vocab: Vocabulary,
    min_len: int = 2,
    max_len: int = 512,
) -> tuple[list[Trace], list[tuple[str, str]]]:
    """Gate synthetic candidates on format, known function names, and length.

    Accepts Trace objects or raw dicts (filemd5/calls/family/provenance);
    returns (accepted traces, [(identifier, reason)] rejections). Raw dicts
    may not claim provenance "real".
    """
    accepted: list[Trace] = []
    rejected: list[tuple[str, str]] = []
    for idx, cand in enumerate(candidates):
        if isinstance(cand, Trace):
            ident: str = cand.filemd5
            calls: Sequence = cand.calls
        elif isinstance(cand, dict):
            ident = str(cand.get("filemd5") or f"candidate-{idx}")
            raw = cand.get("calls")
            calls = raw if isinstance(raw, (list, tuple)) else ()
            if cand.get("provenance") == "real":
                rejected.append((ident, REASON_MALFORMED))
                continue
        else:
            rejected.append((f"candidate-{idx}", REASON_MALFORMED))
            continue
        if len(calls) == 0:
            rejected.append((ident, REASON_EMPTY))
            continue
        if not all(isinstance(t, str) for t in calls):
            rejected.append((ident, REASON_MALFORMED))
            continue
        if any(t not in vocab for t in calls):
            rejected.append((ident, REASON_BAD_NAME))
            continue
        if not (min_len <= len(calls) <= max_len):
            rejected.append((ident, REASON_LENGTH))
            continue
        if isinstance(cand, Trace):
            accepted.append(cand)
        else:
            try:
                accepted.append(
                    Trace(
                        filemd5=ident,
                        calls=tuple(calls),
                        family=int(cand.get("family", -1)),
                        provenance=str(cand.get("provenance", "synthetic-intra")),
                    )
                )
            except (InvalidInput, TypeError, ValueError):
                rejected.append((ident, REASON_MALFORMED))
    return accepted, rejected


def distance_outlier_filter(
    candidates: Sequence[Embedding],
    family_centroid: Embedding,
    real_samples: Sequence[Embedding],
    radius_multiplier: float = 3.0,
) -> list[Embedding]:
    """Keep candidates within multiplier x median real-sample radius of the centroid."""
    if not real_samples:
        raise InvalidInput("distance_outlier_filter requires a non-empty real-sample set")
    center = np.asarray(family_centroid.vector, dtype=np.float64)
    for e in list(real_samples) + list(candidates):
        if e.dim != family_centroid.dim:
            raise ShapeError(f"embedding dim {e.dim} != centroid dim {family_centroid.dim}")
    median = float(
        np.median([np.linalg.norm(np.asarray(r.vector, dtype=np.float64) - center) for r in real_samples])
    )
    radius = radius_multiplier * median
    return [
        e
        for e in candidates
        if np.linalg.norm(np.asarray(e.vector, dtype=np.float64) - center) <= radius
    ]


@dataclass(frozen=True)
class AugmentationRequest:
    """One external-generation job: intra-family variation or a two-family blend."""

    mode: str
    source_families: tuple[int, ...]
    count: int = 10
    prompt_template_id: str | None = None
    seed: int = 0
    target_family: int = -1

    def __post_init__(self):
        object.__setattr__(self, "source_families", tuple(self.source_families))
        if self.mode not in ("intra", "blend"):
            raise InvalidInput(f"unknown augmentation mode {self.mode!r}")
        if self.mode == "intra" and len(self.source_families) != 1:
            raise InvalidInput("intra mode requires exactly one source family")
        if self.mode == "blend" and (
            len(self.source_families) != 2
            or self.source_families[0] == self.source_families[1]
        ):
            raise InvalidInput("blend mode requires exactly two distinct source families")
        if self.count < 1:
            raise InvalidInput(f"count must be >= 1, got {self.count}")


@dataclass
class AugmentResult:
    traces: list[Trace]
    rejections: list[tuple[str, str]]
    attempts: int
    completion: str


def _load_template(template_id: str) -> tuple[str, str]:
    try:
        text = (resources.files("tracebench") / "prompts" / f"{template_id}.txt").read_text(
            encoding="utf-8"
        )
    except FileNotFoundError as exc:
        raise InvalidInput(f"unknown prompt template {template_id!r}") from exc
    if "[SYSTEM]" not in text or "[USER]" not in text:
        raise InvalidInput(f"template {template_id!r} missing [SYSTEM]/[USER] sections")
    system, user = text.split("[USER]", 1)
    return system.replace("[SYSTEM]", "", 1).strip(), user.strip()


def _format_examples(traces: Sequence[Trace]) -> str:
    lines = [f"{i + 1}. {json.dumps(list(t.calls))}" for i, t in enumerate(traces)]
    return "\n".join(lines) if lines else "(none)"


def _render_prompt(
    template_id: str,
    request: AugmentationRequest,
    family_profiles: Mapping[int, str],
    example_traces: Sequence[Trace],
) -> tuple[str, str]:
    system, user = _load_template(template_id)
    if request.mode == "intra":
        fam = request.source_families[0]
        examples = [t for t in example_traces if t.family == fam][:5]
        slots = {
            "family_name": f"family-{fam}",
            "family_description": family_profiles.get(fam, "(no profile provided)"),
            "example_traces": _format_examples(examples),
            "count": request.count,
        }
    else:
        fa, fb = request.source_families
        ex_a = [t for t in example_traces if t.family == fa][:3]
        ex_b = [t for t in example_traces if t.family == fb][:3]
        slots = {
            "family_a_name": f"family-{fa}",
            "family_a_description": family_profiles.get(fa, "(no profile provided)"),
            "family_b_name": f"family-{fb}",
            "family_b_description": family_profiles.get(fb, "(no profile provided)"),
            "example_traces": _format_examples(ex_a + ex_b),
            "count": request.count,
        }
    return system.format(**slots), user.format(**slots)


def _extract_text(body) -> str:
    if isinstance(body, dict):
        choices = body.get("choices")
        if isinstance(choices, list) and choices:
            first = choices[0]
            if isinstance(first, dict):
                msg = first.get("message")
                if isinstance(msg, dict) and isinstance(msg.get("content"), str):
                    return msg["content"]
                if isinstance(first.get("text"), str):
                    return first["text"]
        for key in ("text", "completion"):
            if isinstance(body.get(key), str):
                return body[key]
    return ""


def _http_transport(endpoint: str, api_key: str | None, timeout: float) -> Callable[[dict], str]:
    import requests

    def post(payload: dict) -> str:
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        resp = requests.post(endpoint, json=payload, headers=headers, timeout=timeout)
        resp.raise_for_status()
        return _extract_text(resp.json())

    return post


_LIST_LINE = re.compile(r"^\s*(?:\d+[.):]\s*)?(\[.*\])\s*$")


def _parse_completion(text: str) -> tuple[list[list], int]:
    """Extract candidate token lists; returns (candidates, n_malformed_lines)."""
    try:
        whole = json.loads(text)
    except ValueError:
        whole = None
    if isinstance(whole, list) and whole and all(isinstance(x, list) for x in whole):
        return list(whole), 0
    candidates: list[list] = []
    malformed = 0
    for line in text.splitlines():
        m = _LIST_LINE.match(line)
        if not m:
            continue
        try:
            obj = json.loads(m.group(1))
        except ValueError:
            malformed += 1
            continue
        if isinstance(obj, list):
            candidates.append(obj)
        else:
            malformed += 1
    return candidates, malformed


def llm_augment(
    request: AugmentationRequest,
    family_profiles: Mapping[int, str],
    example_traces: Sequence[Trace],
    vocab: Vocabulary,
    endpoint: str | None = None,
    api_key: str | None = None,
    *,
    transport: Callable[[dict], str] | None = None,
    model: str = "default",
    max_attempts: int = 3,
    backoff_base: float = 0.5,
    timeout: float = 30.0,
    min_len: int = 2,
    max_len: int = 512,
) -> AugmentResult:
    """Fill the prompt template, call the endpoint, filter everything returned.

    Network output never bypasses automated_filter: every parsed candidate is
    either accepted through it or listed in the rejection report.
    """
    if transport is None:
        endpoint = endpoint or os.environ.get("AUGMENT_ENDPOINT")
        api_key = api_key or os.environ.get("AUGMENT_API_KEY")
        if not endpoint:
            raise AugmentError("no augmentation endpoint configured (AUGMENT_ENDPOINT)")
        transport = _http_transport(endpoint, api_key, timeout)
    system, user = _render_prompt(
        request.prompt_template_id or request.mode, request, family_profiles, example_traces
    )
    payload = {
        "model": model,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    }
    completion = None
    last_error: Exception | None = None
    attempts = 0
    for attempt in range(max_attempts):
        attempts = attempt + 1
        try:
            completion = transport(payload)
            break
        except Exception as exc:  # transport failures are retryable by contract
            last_error = exc
            if attempt + 1 < max_attempts:
                time.sleep(backoff_base * (2**attempt))
    if completion is None:
        raise AugmentError(
            f"augmentation endpoint failed after {max_attempts} attempts: {last_error}"
        ) from last_error
    candidates, n_malformed = _parse_completion(completion)
    provenance = "synthetic-intra" if request.mode == "intra" else "synthetic-blend"
    family = request.source_families[0] if request.mode == "intra" else request.target_family
    raw = [
        {
            "filemd5": _mint_md5("llm", request.mode, request.seed, i, json.dumps(c)),
            "calls": c,
            "family": family,
            "provenance": provenance,
        }
        for i, c in enumerate(candidates)
    ]
    accepted, rejected = automated_filter(raw, vocab, min_len=min_len, max_len=max_len)
    rejections = [(f"completion-line-{k}", REASON_MALFORMED) for k in range(n_malformed)]
    rejections.extend(rejected)
    if not candidates and n_malformed == 0:
        rejections = [("completion", REASON_MALFORMED)]
    return AugmentResult(
        traces=accepted, rejections=rejections, attempts=attempts, completion=completion
    )


def augment_many(
    requests_list: Sequence[AugmentationRequest],
    family_profiles: Mapping[int, str],
    example_traces: Sequence[Trace],
    vocab: Vocabulary,
    max_inflight: int = 4,
    **kwargs,
) -> list[AugmentResult]:
    """Run several augmentation jobs with a bounded number in flight."""
    if not requests_list:
        return []
    with ThreadPoolExecutor(max_workers=max(1, max_inflight)) as pool:
        futures = [
            pool.submit(llm_augment, req, family_profiles, example_traces, vocab, **kwargs)
            for req in requests_list
        ]
        return [f.result() for f in futures]


@dataclass(frozen=True)
class SynthRecipe:
    """Shape and knobs for one synthetic dataset."""

    name: str
    n_families: int
    n_samples: int
    n_outliers: int = 0
    seed: int = 0
    n_motifs: tuple[int, int] = (4, 8)
    motif_pairs: tuple[int, int] = (2, 5)
    shared_fraction: tuple[float, float] = (0.3, 0.6)
    p_ins: float = 0.2
    p_del: float = 0.05
    p_swap: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "n_motifs", tuple(self.n_motifs))
        object.__setattr__(self, "motif_pairs", tuple(self.motif_pairs))
        object.__setattr__(self, "shared_fraction", tuple(self.shared_fraction))
        if not self.name:
            raise InvalidConfig("recipe needs a name")
        if self.n_families < 1:
            raise InvalidConfig(f"n_families must be >= 1, got {self.n_families}")
        if self.n_outliers < 0:
            raise InvalidConfig(f"n_outliers must be >= 0, got {self.n_outliers}")
        if self.n_outliers > 0 and self.n_families < 2:
            raise InvalidConfig("outlier blending needs at least two families")
        if self.n_samples - self.n_outliers < 2 * self.n_families:
            raise InvalidConfig(
                f"recipe {self.name}: {self.n_samples} samples cannot cover "
                f"{self.n_families} families (>= 2 each) plus {self.n_outliers} outliers"
            )
        for lo, hi in (self.n_motifs, self.motif_pairs):
            if lo < 1 or hi < lo:
                raise InvalidConfig(f"bad range ({lo}, {hi}) in recipe {self.name}")
        lo, hi = self.shared_fraction
        if not (0.0 <= lo <= hi <= 1.0):
            raise InvalidConfig(f"shared_fraction range ({lo}, {hi}) invalid")
        rates = (self.p_ins, self.p_del, self.p_swap)
        if any(not (0.0 <= r <= 1.0) for r in rates) or sum(rates) > 1.0:
            raise InvalidConfig(f"mutation rates {rates} invalid in recipe {self.name}")


# Dataset shapes: (samples, families, outliers).
BUILTIN_RECIPES: dict[str, SynthRecipe] = {
    "ds1": SynthRecipe(name="ds1", n_families=21, n_samples=452, n_outliers=1),
    "ds2": SynthRecipe(name="ds2", n_families=37, n_samples=553, n_outliers=10),
    "ds3": SynthRecipe(name="ds3", n_families=48, n_samples=1125, n_outliers=23),
    "ds4": SynthRecipe(name="ds4", n_families=81, n_samples=1617, n_outliers=28),
}


def load_recipe(path: str | Path) -> SynthRecipe:
    """Read a recipe from YAML; builtin names (ds1..ds4) resolve directly."""
    key = str(path)
    if key in BUILTIN_RECIPES:
        return BUILTIN_RECIPES[key]
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: recipe must be a mapping")
    allowed = set(SynthRecipe.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise InvalidConfig(f"{path}: unknown recipe keys {sorted(unknown)}")
    try:
        return SynthRecipe(**data)
    except TypeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc


def _family_sizes(total: int, k: int) -> list[int]:
    """Split ``total`` across k families: 2 each, remainder by 1/sqrt(rank)."""
    sizes = [2] * k
    remaining = total - 2 * k
    weights = 1.0 / np.sqrt(np.arange(1, k + 1))
    weights /= weights.sum()
    exact = weights * remaining
    floors = np.floor(exact).astype(int)
    leftover = remaining - int(floors.sum())
    order = sorted(range(k), key=lambda i: (-(exact[i] - floors[i]), i))
    for i in range(k):
        sizes[i] += int(floors[i])
    for i in order[:leftover]:
        sizes[i] += 1
    return sizes


def make_family_grammars(recipe: SynthRecipe, rng: np.random.Generator) -> list[FamilyGrammar]:
    """Random grammars from the builtin token pool, deterministic under rng state.

    Each family holds a few exclusive callees (round-robin over the private
    region) plus draws from the shared region, so families overlap on common
    tokens but keep a distinctive signature.
    """
    k = recipe.n_families
    exclusive: list[list[str]] = [[] for _ in range(k)]
    for idx, tok in enumerate(_PRIVATE_CALLEES):
        exclusive[idx % k].append(tok)
    grammars = []
    for f in range(k):
        frac = float(rng.uniform(*recipe.shared_fraction))
        n_shared = max(2, int(round(frac * 10)))
        shared = [str(t) for t in rng.choice(_SHARED_CALLEES, size=n_shared, replace=False)]
        callees = list(dict.fromkeys(exclusive[f][:6] + shared))
        junk = tuple(str(t) for t in rng.choice(_JUNK_CALLEES, size=8, replace=False))
        n_motifs = int(rng.integers(recipe.n_motifs[0], recipe.n_motifs[1] + 1))
        motifs = []
        for _ in range(n_motifs):
            m_len = int(rng.integers(recipe.motif_pairs[0], recipe.motif_pairs[1] + 1))
            caller = ROOT_CALLER
            pairs = []
            for _ in range(m_len):
                callee = callees[int(rng.integers(len(callees)))]
                pairs.append((caller, callee))
                r = rng.random()
                if r < 0.5:
                    caller = callee  # descend into the call we just made
                elif r < 0.75:
                    caller = ROOT_CALLER
                # else: same caller, sibling call
            motifs.append(tuple(pairs))
        grammars.append(
            FamilyGrammar(
                family_id=f + 1,
                core_motifs=tuple(motifs),
                junk_pool=junk,
                p_ins=recipe.p_ins,
                p_del=recipe.p_del,
                p_swap=recipe.p_swap,
            )
        )
    return grammars


def synthesize_dataset(recipe: SynthRecipe) -> Dataset:
    """Grammar-generate a full labeled dataset matching the recipe's shape."""
    rng = np.random.default_rng(recipe.seed)
    grammars = make_family_grammars(recipe, rng)
    sizes = _family_sizes(recipe.n_samples - recipe.n_outliers, recipe.n_families)
    traces: list[Trace] = []
    for grammar, size in zip(grammars, sizes):
        traces.extend(generate_family(grammar, size, seed=int(rng.integers(2**31))))
    for _ in range(recipe.n_outliers):
        ia, ib = (int(x) for x in rng.choice(len(grammars), size=2, replace=False))
        traces.extend(
            blend_families(grammars[ia], grammars[ib], 1, seed=int(rng.integers(2**31)), family=-1)
        )
    return Dataset(name=recipe.name, traces=tuple(traces))
