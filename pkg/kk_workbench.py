import argparse
import glob
import hashlib
import os
import sys
from fractions import Fraction
from typing import Dict, Any, List, Optional, Callable

import console
import crossed_product
import duality_engine
import fock_numeric
import pimsner_k
import watatani
from errors import WorkbenchError, HypothesisError, SuperStrongError
from exact_abelian import identity, matrix_to_list
from graph_core import DirectedGraph, load_graph
from report_generator import emit, flatten, merge_reports, print_table
from run_config import RunConfig, TOOL_VERSION, load_config, apply_overrides

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_CHECK_FAILED = 2
DEFAULT_FIXTURE_DIR = "fixtures"
DEFAULT_INDEX_WORDS = ("U", "U^2", "U^-1", "W")


def fixture_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b''):
            digest.update(chunk)
    return digest.hexdigest()


def _guard(fn: Callable, *args, **kwargs):
    """Runs one stage; hypothesis gates and other workbench errors come back as text."""
    try:
        return fn(*args, **kwargs), None
    except WorkbenchError as e:
        return None, str(e)


def _base_report(command: str, config: RunConfig, path: Optional[str] = None,
                 g: Optional[DirectedGraph] = None) -> Dict[str, Any]:
    report: Dict[str, Any] = {'command': command, 'tool_version': TOOL_VERSION, 'config': config.to_dict()}
    if path is not None:
        report['fixture'] = os.path.basename(path)
        report['fixture_sha256'] = fixture_sha256(path)
    if g is not None:
        report['graph'] = g.name
    return report


def corrupted_rung(n: int):
    """Identity plus one off-diagonal unit, or 2 on a single vertex."""
    rung = identity(n)
    if n > 1:
        rung[0, n - 1] += 1
    else:
        rung[0, 0] = 2
    return rung


def _finish(report: Dict[str, Any], checks: Dict[str, Optional[bool]]) -> Dict[str, Any]:
    report['checks'] = checks
    report['passed'] = all(v is not False for v in checks.values())
    return report


# --- Pipelines ---

def run_kgroups(g: DirectedGraph, config: RunConfig, path: Optional[str] = None) -> Dict[str, Any]:
    """K-theory of 𝒪_E and both dual candidates, plus K-homology of 𝒪_E."""
    console.step(f"🔬 Computing K-theory of '{g.name}'...")
    report = _base_report('kgroups', config, path, g)
    checks: Dict[str, Optional[bool]] = {}
    rows: List[Dict[str, Any]] = []
    sections: Dict[str, Any] = {}

    k_theory = pimsner_k.cp_k_theory(g)
    sections['E'] = k_theory.to_dict()
    rows.append(pimsner_k.k_summary(k_theory))
    k_homology, err = _guard(pimsner_k.cp_k_homology, g)
    sections['E_homology'] = k_homology.to_dict() if k_homology else {'gate': err}
    for choice in pimsner_k.DUAL_CHOICES:
        kd, err = _guard(pimsner_k.dual_k_data, g, choice)
        sections[choice] = kd.to_dict() if kd else {'gate': err}
        if kd:
            rows.append(pimsner_k.k_summary(kd))
            checks[f'{choice}: K-data matches O(E)'] = kd.k0 == k_theory.k0 and kd.k1 == k_theory.k1

    checks['Euler characteristic 0'] = pimsner_k.euler_characteristic(k_theory) == 0
    if k_homology:
        rows.append(pimsner_k.k_summary(k_homology))
        checks['K^0 torsion-free'] = k_homology.k0.is_torsion_free()
        checks['rank K^0 = rank K_1'] = k_homology.k0.free_rank == k_theory.k1.free_rank
    report['groups'] = sections
    report['tables'] = {'K-groups': rows}
    console.success(f"K-groups of '{g.name}': K0 = {k_theory.k0}, K1 = {k_theory.k1}")
    return _finish(report, checks)


def run_duality(g: DirectedGraph, config: RunConfig, path: Optional[str] = None,
                choice: str = pimsner_k.EOP, corrupt_rung: bool = False) -> Dict[str, Any]:
    console.step(f"🔗 Checking the duality ladder of '{g.name}' ({choice})...")
    report = _base_report('duality', config, path, g)
    report.update(duality_engine.pd_report(g, config.asymptotics.k_max, config.asymptotics.n_max))
    report['command'] = 'duality'
    report['selected_dual'] = choice
    checks = dict(report.pop('checks'))
    report.pop('passed', None)

    if corrupt_rung:
        rung = corrupted_rung(g.n)
        ladder, err = _guard(duality_engine.build_pd_diagram, g, choice, rung)
        if ladder is None:
            report['corrupted_rung'] = {'gate': err}
        else:
            result = duality_engine.check_ladder_commutes(ladder)
            theta = duality_engine.solve_theta(ladder)
            report['corrupted_rung'] = {'rung': matrix_to_list(rung), **result.to_dict(),
                                        'theta': theta.to_dict()}
            checks[f'{choice}: corrupted rung still certifies the ladder'] = result.commutes and theta.certified

    rows = []
    for sign in duality_engine.SIGNS:
        kp = report['fundamental_classes'][sign].get('kp_class', {})
        for edge in kp.get('summands', []):
            rows.append({'sign': sign, 'edge': edge, 'provenance': kp.get('provenance', '')})
    report['tables'] = {'Kaminker-Putnam summands': rows}
    return _finish(report, checks)


def run_assumptions(g: DirectedGraph, config: RunConfig, path: Optional[str] = None) -> Dict[str, Any]:
    console.step(f"📈 Evaluating Watatani asymptotics of '{g.name}'...")
    a = config.asymptotics
    tol = config.tolerances.numeric
    report = _base_report('assumptions', config, path, g)
    checks: Dict[str, Optional[bool]] = {}

    report['watatani_index'] = [watatani.watatani_index(g, n).to_dict() for n in range(0, a.k_max + 3)]
    perron, err = _guard(watatani.perron_if_available, g)
    report['perron'] = perron.to_dict() if perron else {'gate': err or 'graph has sources or sinks'}

    assumption = watatani.assumption_one_check(g, a.k_max, a.n_max, tol)
    report['assumption'] = assumption.to_dict()
    checks['asymptotic assumption'] = assumption.holds
    rows = [{'path': '.'.join(r.path), 'q': r.to_dict()['coefficient'], 'class': r.convergence,
             'exponent': r.exponent, 'rate': r.rate, 'closed_form_agrees': r.closed_form_agrees}
            for r in assumption.elements]
    report['tables'] = {'q-coefficients': rows}

    if assumption.holds:
        report['sum_rules'] = watatani.sum_rule_check(g, a.k_max, a.n_max, tol)
        checks['sum rules'] = report['sum_rules']['holds']
        ss = watatani.super_strong_check(g, a.k_max, tol, a.n_max)
        report['super_strong'] = ss.to_dict()
        if not ss.holds:
            report['flag'] = f"super-strong condition fails ({ss.reason}); EbarOp Fock constructions unavailable"
    return _finish(report, checks)


def _below(value: Optional[float], tol: float) -> Optional[bool]:
    return None if value is None else bool(value < tol)


def run_fock_verify(g: DirectedGraph, config: RunConfig, path: Optional[str] = None,
                    level: Optional[int] = None, tol: Optional[float] = None,
                    decay_levels: Optional[List[int]] = None) -> Dict[str, Any]:
    t = config.truncation
    a = config.asymptotics
    L = level or t.fock_level
    tol = tol or config.tolerances.numeric
    console.step(f"🧮 Building the truncated Fock representation of '{g.name}' at L={L}...")
    report = _base_report('fock-verify', config, path, g)
    report['level'] = L
    checks: Dict[str, Optional[bool]] = {}
    tables: Dict[str, List[Dict[str, Any]]] = {}

    rep = fock_numeric.build_fock_rep(g, L, t.basis_cap)
    report['fock_dim'] = rep.dim
    report['ck_relations'] = dict(rep.self_test)
    checks['Cuntz-Krieger relations on interior'] = all(v < tol for v in rep.self_test.values())

    ew = fock_numeric.build_w_ew(rep)
    report['w_ew'] = ew.to_dict()
    checks['w*w = 1 on interior'] = _below(ew.w_star_w_residual, tol)
    checks['ww* = q on interior'] = _below(ew.q_residual, tol)
    checks['e_w(t) projection off the vacuum'] = all(r < tol for r in ew.ew_residuals.values())
    checks['e_w(t) commutes with the left action'] = _below(ew.commutation_residual, tol)
    checks['e_w(t) identity (symbolic)'] = ew.symbolic_identity

    index = fock_numeric.fredholm_index_compressed(rep, ew.w, basis_cap=t.basis_cap)
    report['index'] = index.to_dict()
    checks['index = |G0|'] = index.index == g.n and all(k == 1 for k in index.kernel_by_vertex.values())
    checks['index stable at L+2'] = index.stable

    for dual in pimsner_k.DUAL_CHOICES:
        kp, err = _guard(fock_numeric.build_kp_projection, g, L, dual, a.k_max, a.n_max, tol, t.basis_cap)
        if kp is None:
            report[f'kp_{dual}'] = {'gate': err}
            continue
        report[f'kp_{dual}'] = kp.to_dict()
        checks[f'{dual}: V isometry on interior'] = _below(kp.isometry_defect, tol)
        checks[f'{dual}: P projection'] = _below(kp.projection_residual, tol)
        checks[f'{dual}: (2P-1)^2 = 1'] = _below(kp.symmetry_residual, max(tol, 2 * kp.projection_residual))
        checks[f'{dual}: adjoint formula'] = _below(kp.adjoint_deviation, tol)

    if decay_levels is None:
        decay_levels = list(range(1, L - 1))
    edge = g.edges[0].name if g.edges else None
    if edge is not None and decay_levels:
        decay, err = _guard(fock_numeric.commutator_decay, g, edge, decay_levels, None, pimsner_k.EOP,
                            'left', t.paths_per_level, config.seed, a.n_max, tol)
        if decay is not None:
            tables['Commutator decay'] = decay
            checks['commutator norm = 1/sqrt(l+2)'] = all(
                abs(row['norm'] - row['exact_rate']) < tol for row in decay if row['paths'])
        else:
            report['commutator_decay'] = {'gate': err}

    homotopy, err = _guard(fock_numeric.homotopy_pt_check, g, min(L, 4), fock_numeric.DEFAULT_T_SAMPLES,
                           pimsner_k.EOP, a.k_max, a.n_max, tol, t.basis_cap)
    report['homotopy'] = homotopy if homotopy else {'gate': err}
    if homotopy:
        checks['P_t projections'] = _below(homotopy['max_residual'], tol)

    conjugate, err = _guard(fock_numeric.conjugate_gram_equality, g, min(L, 3), a.n_max, tol)
    report['conjugate_gram_deviation'] = conjugate if conjugate is not None else {'gate': err}
    if conjugate is not None:
        checks['conjugate module Gram equality'] = _below(conjugate, tol)

    report['tables'] = tables
    return _finish(report, checks)


def run_index(config: RunConfig, words: List[str], theta: Optional[str] = None,
              modes: Optional[int] = None, window: Optional[int] = None, grading: str = 'N',
              scaling: bool = False, delta: bool = False) -> Dict[str, Any]:
    t = config.truncation
    theta_value = crossed_product.parse_theta(theta) if theta is not None else Fraction(0)
    window = window or t.graded_window
    modes = modes or t.fourier_modes
    console.step(f"🌀 Pairing generators on the graded window N_max={window}, M={modes}, theta={theta_value}...")
    report = _base_report('index', config)
    report.update({'graph': 'rotation', 'theta': str(theta_value), 'window': window, 'modes': modes})
    checks: Dict[str, Optional[bool]] = {}

    trunc = crossed_product.build_graded_truncation(window, modes, theta_value)
    invariants = crossed_product.truncation_invariants(trunc)
    report['invariants'] = invariants
    checks['graded truncation invariants'] = all(v < config.tolerances.exact for v in invariants.values())

    rows = []
    for word in words:
        result = crossed_product.ext_index_pairing(trunc, word, grading, tol=config.tolerances.zero)
        rows.append(result.to_dict())
        checks[f'{result.word}: stable'] = result.stable

    base = crossed_product.ext_index_pairing(trunc, 'U', 'N', check_stability=False).normalized_index
    checks['U^k additivity'] = all(
        crossed_product.ext_index_pairing(trunc, f'U^{k}', 'N', check_stability=False).normalized_index == k * base
        for k in (1, 2, 3))

    nsd = crossed_product.build_nsharpd(trunc)
    report['nsharpd'] = nsd.to_dict()
    checks['N#D self-adjoint'] = nsd.self_adjoint_residual == 0.0
    checks['N#D odd'] = nsd.anticommutator_residual == 0.0

    if scaling:
        report['scaling'] = crossed_product.commutator_scaling(modes, theta_value)
        checks['bounded commutators'] = all(v < 0.05 for v in report['scaling']['max_variation'].values())
    if delta:
        report['delta'] = crossed_product.rotation_delta_components(theta_value, min(window, 16), modes)
        checks['rotation e_w(t) exact'] = all(report['delta']['ew_projection_exact'].values())
    report['tables'] = {'Index pairings': rows}
    if delta:
        report['tables']['Rotation-algebra delta'] = report['delta']['pairing_table']
    return _finish(report, checks)


def run_report(config: RunConfig, fixture_dir: str) -> Dict[str, Any]:
    """Every graph check on every fixture, merged by fixture name, plus the graded index pairings."""
    paths = sorted(glob.glob(os.path.join(fixture_dir, '*.json')))
    if not paths:
        raise WorkbenchError(f"No fixtures found in {fixture_dir}")
    reports = []
    for path in paths:
        g = load_graph(path)
        sub = _base_report('fixture', config, path, g)
        sub.pop('config')
        checks: Dict[str, Optional[bool]] = {}
        for name, runner in (('kgroups', run_kgroups), ('duality', run_duality),
                             ('assumptions', run_assumptions), ('fock-verify', run_fock_verify)):
            part, err = _guard(runner, g, config, path)
            if part is None:
                sub[name] = {'gate': err}
                continue
            for key, value in part['checks'].items():
                checks[f'{name}: {key}'] = value
            sub[name] = {'passed': part['passed']}
        reports.append(_finish(sub, checks))
    merged = merge_reports(reports)
    index, err = _guard(run_index, config, list(DEFAULT_INDEX_WORDS), delta=True)
    if index is None:
        merged['index'] = {'gate': err, 'passed': False}
    else:
        index.pop('config')
        merged['index'] = index
    merged['passed'] = merged['passed'] and merged['index']['passed']
    merged['tool_version'] = TOOL_VERSION
    merged['config'] = config.to_dict()
    return merged


# --- CLI ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='kk_workbench',
        description="K-theory, K-homology and duality checks for Cuntz-Pimsner algebras of finite graphs.")
    parser.add_argument('--config', help='YAML run configuration (default: workbench.yaml if present)')
    parser.add_argument('--format', choices=('json', 'md'), help='Report format on stdout')
    parser.add_argument('--quiet', action='store_true', help='Suppress status lines on stderr')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('kgroups', help='K-theory of O(E), O(E^op) and O(E)^op')
    p.add_argument('graph', help='Graph JSON file')

    p = sub.add_parser('duality', help='Poincare-duality ladder, theta and fundamental classes')
    p.add_argument('graph', help='Graph JSON file')
    p.add_argument('--dual', choices=pimsner_k.DUAL_CHOICES, default=pimsner_k.EOP)
    p.add_argument('--corrupt-rung', action='store_true', help='Replace mu by a non-invertible or off-diagonal rung and report what fails')

    p = sub.add_parser('assumptions', help='Watatani indices, q-coefficients and the super-strong test')
    p.add_argument('graph', help='Graph JSON file')
    p.add_argument('--n-max', type=int)
    p.add_argument('--k-max', type=int)

    p = sub.add_parser('fock-verify', help='Truncated Fock-space checks')
    p.add_argument('--graph', required=True, help='Graph JSON file')
    p.add_argument('--level', type=int, help='Fock truncation level L')
    p.add_argument('--tol', type=float, help='Tolerance for numerical residuals')
    p.add_argument('--decay-levels', type=int, nargs='+', help='Levels l for the commutator-decay table')

    p = sub.add_parser('index', help='Index pairings on the graded circle/rotation truncation')
    p.add_argument('words', nargs='*', default=['U'], help='Generator words such as "U", "U^2", "W", "z"')
    p.add_argument('--theta', help="Rotation angle in turns, e.g. '3/10'")
    p.add_argument('--modes', type=int, help='Fourier modes M')
    p.add_argument('--window', type=int, help='Grading window N_max')
    p.add_argument('--grading', choices=crossed_product.GRADINGS, default='N')
    p.add_argument('--scaling', action='store_true', help='Commutator norms for N_max in 16..128')
    p.add_argument('--delta', action='store_true', help='Rotation-algebra delta summands and pairings')

    p = sub.add_parser('report', help='Run every graph check on every fixture')
    p.add_argument('--fixtures', default=DEFAULT_FIXTURE_DIR, help='Directory of graph JSON files')
    return parser


def run_command(args: argparse.Namespace) -> Dict[str, Any]:
    config = load_config(args.config)
    overrides = {'output_format': args.format}
    if args.command == 'assumptions':
        overrides.update({'n_max': args.n_max, 'k_max': args.k_max})
    config = apply_overrides(config, overrides)

    if args.command == 'kgroups':
        return run_kgroups(load_graph(args.graph), config, args.graph)
    if args.command == 'duality':
        return run_duality(load_graph(args.graph), config, args.graph, args.dual, args.corrupt_rung)
    if args.command == 'assumptions':
        return run_assumptions(load_graph(args.graph), config, args.graph)
    if args.command == 'fock-verify':
        return run_fock_verify(load_graph(args.graph), config, args.graph, args.level, args.tol, args.decay_levels)
    if args.command == 'index':
        return run_index(config, args.words, args.theta, args.modes, args.window, args.grading,
                         args.scaling, args.delta)
    if args.command == 'report':
        return run_report(config, args.fixtures)
    raise WorkbenchError(f"Unknown command: {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    """CLI entry point: 0 when every check passes, 2 when a check fails, 1 on errors."""
    args = build_parser().parse_args(argv)
    console.set_quiet(args.quiet)
    try:
        report = run_command(args)
    except SuperStrongError as e:
        console.error(f"{e} (witness: {e.witness})")
        return EXIT_FATAL
    except HypothesisError as e:
        console.error(f"{e}" + (f" [vertex {e.vertex}]" if e.vertex else ''))
        return EXIT_FATAL
    except (WorkbenchError, ValueError) as e:
        console.error(str(e))
        return EXIT_FATAL

    fmt = report['config']['output_format']
    emit(report, fmt)
    if not console.is_quiet() and report.get('checks'):
        print_table("Checks", ["Check", "Value"], flatten(report['checks']), stream=sys.stderr)
    if report['passed']:
        console.success("All checks passed.")
        return EXIT_OK
    failing = [k for k, v in (report.get('checks') or {}).items() if v is False]
    console.error(f"Failing checks: {', '.join(failing) or 'see report'}")
    return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
