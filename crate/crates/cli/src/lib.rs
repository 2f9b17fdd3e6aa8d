//! Command-line front end: resolves the configuration, runs one experiment
//! and writes a CSV table preceded by `#` metadata lines.

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use hetnet_core::config::{resolve, ConfigSources, ResolvedConfig};
use hetnet_core::energy::{
    efficiency_at, evaluate_scheme, optimize_zeta_with, sweep, AllocationScheme, EEResult, OptimizeConfig,
    SweepVariable,
};
use hetnet_core::model::{cell_load_pmf, mean_macro_load, underload_probability};
use hetnet_core::quadrature::QuadConfig;
use hetnet_core::rates::{base_rates, zeta_prefactor};
use hetnet_core::sim::estimate_rate;
use hetnet_core::special::{dbm_to_watts, watts_to_dbm};
use hetnet_core::{Error, Link, Network};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "hetnet", version, about = "Energy efficiency of massive MIMO HetNets with wireless backhaul")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Preset expression, e.g. `pico+heavy`.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Override one key, e.g. `--set zeta_b=0.4`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output CSV path; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo replicates.
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    /// Grid: a count `N`, a range `start:stop:n` or a list `a,b,c`.
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Bandwidth-split scheme(s): optimal, proportional, one-tier or fixed:<v>.
    #[arg(long, global = true, value_delimiter = ',')]
    pub scheme: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Derived model symbols.
    Derive,
    /// The six link rates and the area rate.
    Rates,
    /// Per-link and per-area power.
    Power,
    /// Energy efficiency at the configured split.
    Ee,
    /// Energy efficiency over the bandwidth split.
    SweepZeta,
    /// Energy efficiency over the MBS transmit power (grid in dBm).
    SweepPower,
    /// Energy efficiency over the number of SAPs per MBS.
    SweepSaps,
    /// The energy-efficient bandwidth split.
    OptimizeZeta,
    /// Analytic rates against Monte Carlo estimates.
    McValidate,
    /// Macro-cell load distribution and underload probability.
    LoadPmf,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Derive => "derive",
            Command::Rates => "rates",
            Command::Power => "power",
            Command::Ee => "ee",
            Command::SweepZeta => "sweep-zeta",
            Command::SweepPower => "sweep-power",
            Command::SweepSaps => "sweep-saps",
            Command::OptimizeZeta => "optimize-zeta",
            Command::McValidate => "mc-validate",
            Command::LoadPmf => "load-pmf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format_number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// 17 significant digits in scientific notation; round-trips every `f64`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

/// Writes `#` metadata lines, the header and the rows.
pub fn emit_csv<W: Write>(out: W, meta: &[String], table: &Table) -> hetnet_core::Result<()> {
    let mut out = io::BufWriter::new(out);
    for line in meta {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(&table.header).map_err(io_err)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::render)).map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Process exit code of an error category.
pub fn exit_code(err: &Error) -> i32 {
    match err.category() {
        "config" => 2,
        "invalid-params" => 3,
        "domain" => 4,
        "non-convergence" => 5,
        "non-finite" => 6,
        "degenerate-model" => 7,
        "rank-deficient" => 8,
        "empty-tier" => 9,
        _ => 10,
    }
}

fn parse_scheme(s: &str) -> hetnet_core::Result<AllocationScheme> {
    Ok(match s.trim() {
        "optimal" => AllocationScheme::Optimal,
        "proportional" => AllocationScheme::Proportional,
        "one-tier" | "onetier" => AllocationScheme::OneTier,
        other => match other.strip_prefix("fixed:") {
            Some(v) => AllocationScheme::Fixed(
                v.parse()
                    .map_err(|_| Error::Config(format!("scheme `{other}`: bad fixed split")))?,
            ),
            None => return Err(Error::Config(format!("unknown scheme `{other}`"))),
        },
    })
}

/// Parses `N` (N points on `[lo, hi]`), `start:stop:n` or `a,b,c`.
pub fn parse_grid(s: &str, lo: f64, hi: f64) -> hetnet_core::Result<Vec<f64>> {
    let bad = || Error::Config(format!("bad grid `{s}`"));
    let linspace = |a: f64, b: f64, n: usize| -> hetnet_core::Result<Vec<f64>> {
        match n {
            0 => Err(bad()),
            1 => Ok(vec![a]),
            _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
        }
    };
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        return linspace(a, b, n);
    }
    if s.contains(',') {
        return s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect();
    }
    let n: usize = s.trim().parse().map_err(|_| bad())?;
    linspace(lo, hi, n)
}

fn ee_header(prefix: &[&'static str]) -> Vec<&'static str> {
    let mut h = prefix.to_vec();
    h.extend([
        "zeta_b",
        "eta_bit_per_j",
        "area_rate_bps_m2",
        "area_power_w_m2",
        "r_m_dl",
        "r_m_ul",
        "r_s_dl",
        "r_s_ul",
        "r_b_dl",
        "r_b_ul",
        "p_macro_link_w",
        "p_small_link_w",
        "p_backhaul_link_w",
    ]);
    h
}

fn ee_cells(r: &EEResult) -> Vec<Cell> {
    let b = &r.rates;
    let p = &r.power;
    [
        r.zeta_b,
        r.eta,
        r.area_rate,
        r.area_power,
        b.r_m_dl,
        b.r_m_ul,
        b.r_s_dl,
        b.r_s_ul,
        b.r_b_dl,
        b.r_b_ul,
        p.p_macro_link,
        p.p_small_link,
        p.p_backhaul_link,
    ]
    .into_iter()
    .map(Cell::Num)
    .collect()
}

fn nan_cells(n: usize) -> Vec<Cell> {
    vec![Cell::Num(f64::NAN); n]
}

/// Runs one command on a resolved configuration.
pub fn execute(cli: &Cli, cfg: &ResolvedConfig) -> hetnet_core::Result<Table> {
    let net = cfg.network()?;
    let quad = match cli.tol {
        Some(t) => QuadConfig::default().with_rel_tol(t),
        None => QuadConfig::default(),
    };
    quad.validate()?;
    let mut opt = OptimizeConfig {
        quad,
        ..OptimizeConfig::default()
    };
    let schemes: Vec<AllocationScheme> = if cli.scheme.is_empty() {
        vec![AllocationScheme::Optimal]
    } else {
        cli.scheme.iter().map(|s| parse_scheme(s)).collect::<hetnet_core::Result<_>>()?
    };
    match cli.command {
        Command::Derive => Ok(derive_table(&net)),
        Command::Rates => {
            let base = base_rates(&net, &quad)?;
            let b = base.bundle(&net, net.params.zeta_b);
            let mut t = Table::new(&["quantity", "value", "unit"]);
            for link in Link::ALL {
                t.rows.push(vec![
                    Cell::Text(link.name().into()),
                    Cell::Num(b.get(link)),
                    Cell::Text("bit/s/Hz".into()),
                ]);
            }
            t.rows.push(vec![
                Cell::Text("area_rate".into()),
                Cell::Num(b.area_rate),
                Cell::Text("bit/s/m2".into()),
            ]);
            Ok(t)
        }
        Command::Power => {
            let base = base_rates(&net, &quad)?;
            let r = efficiency_at(&net, &base, net.params.zeta_b)?;
            let mut t = Table::new(&["quantity", "value", "unit"]);
            for (name, v, unit) in [
                ("p_macro_link", r.power.p_macro_link, "W"),
                ("p_small_link", r.power.p_small_link, "W"),
                ("p_backhaul_link", r.power.p_backhaul_link, "W"),
                ("p_area", r.power.p_area, "W/m2"),
            ] {
                t.rows.push(vec![Cell::Text(name.into()), Cell::Num(v), Cell::Text(unit.into())]);
            }
            Ok(t)
        }
        Command::Ee => {
            let base = base_rates(&net, &quad)?;
            let r = efficiency_at(&net, &base, net.params.zeta_b)?;
            let mut t = Table::new(&ee_header(&[]));
            t.rows.push(ee_cells(&r));
            Ok(t)
        }
        Command::SweepZeta => {
            let grid = parse_grid(cli.grid.as_deref().unwrap_or("33"), 0.0, 1.0)?;
            let rows = sweep(&net, SweepVariable::ZetaB, &grid, AllocationScheme::Optimal, &opt)?;
            let header = ee_header(&["row"]);
            let mut t = Table::new(&[header.as_slice(), &["error"]].concat());
            let mut best: Option<EEResult> = None;
            for row in rows {
                let mut cells = vec![Cell::Text("grid".into())];
                match row.result {
                    Ok(r) => {
                        cells.extend(ee_cells(&r));
                        cells.push(Cell::Text(String::new()));
                        if best.is_none_or(|b| r.eta > b.eta) {
                            best = Some(r);
                        }
                    }
                    Err(e) => {
                        let mut c = nan_cells(header.len() - 1);
                        c[0] = Cell::Num(row.x);
                        cells.extend(c);
                        cells.push(Cell::Text(e.to_string()));
                    }
                }
                t.rows.push(cells);
            }
            let mut cells = vec![Cell::Text("argmax".into())];
            match best {
                Some(r) => cells.extend(ee_cells(&r)),
                None => cells.extend(nan_cells(header.len() - 1)),
            }
            cells.push(Cell::Text(String::new()));
            t.rows.push(cells);
            Ok(t)
        }
        Command::SweepPower | Command::SweepSaps => {
            let (variable, grid, label) = if cli.command == Command::SweepPower {
                let dbm = parse_grid(cli.grid.as_deref().unwrap_or("30:50:11"), 30.0, 50.0)?;
                (SweepVariable::PmtCoupled, dbm, "p_mt_dbm")
            } else {
                let k = parse_grid(cli.grid.as_deref().unwrap_or("1,2,3,4,5,6,7,8"), 1.0, 8.0)?;
                (SweepVariable::SapsPerMbs, k, "k_b")
            };
            let xs: Vec<f64> = if variable == SweepVariable::PmtCoupled {
                grid.iter().map(|&d| dbm_to_watts(d)).collect()
            } else {
                grid.clone()
            };
            let header = ee_header(&["scheme", label]);
            let mut t = Table::new(&[header.as_slice(), &["error"]].concat());
            for scheme in &schemes {
                for row in sweep(&net, variable, &xs, *scheme, &opt)? {
                    let x = if variable == SweepVariable::PmtCoupled {
                        watts_to_dbm(row.x)
                    } else {
                        row.x
                    };
                    let mut cells = vec![Cell::Text(scheme.name()), Cell::Num(x)];
                    match row.result {
                        Ok(r) => {
                            cells.extend(ee_cells(&r));
                            cells.push(Cell::Text(String::new()));
                        }
                        Err(e) => {
                            cells.extend(nan_cells(header.len() - 2));
                            cells.push(Cell::Text(e.to_string()));
                        }
                    }
                    t.rows.push(cells);
                }
            }
            Ok(t)
        }
        Command::OptimizeZeta => {
            if let Some(g) = &cli.grid {
                opt.grid_points = g
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("optimize-zeta grid must be a count, got `{g}`")))?;
            }
            let mut t = Table::new(&ee_header(&["scheme"]));
            let schemes = if cli.scheme.is_empty() {
                vec![
                    AllocationScheme::Optimal,
                    AllocationScheme::Proportional,
                    AllocationScheme::Fixed(0.5),
                    AllocationScheme::OneTier,
                ]
            } else {
                schemes
            };
            for scheme in schemes {
                let r = if scheme == AllocationScheme::Optimal {
                    let base = base_rates(&net, &quad)?;
                    optimize_zeta_with(&net, &base, &opt)?.result
                } else {
                    evaluate_scheme(&net, scheme, &opt)?
                };
                let mut cells = vec![Cell::Text(scheme.name())];
                cells.extend(ee_cells(&r));
                t.rows.push(cells);
            }
            Ok(t)
        }
        Command::McValidate => {
            let mut t = Table::new(&[
                "link",
                "analytic",
                "mc_mean",
                "ci95_halfwidth",
                "rel_gap",
                "replicates",
                "rejected_topologies",
                "status",
            ]);
            let base = base_rates(&net, &quad)?;
            for link in Link::ALL {
                let analytic = base.get(link) * zeta_prefactor(link, net.params.zeta_b, &net);
                let est = estimate_rate(link, &net, &cfg.sim)?;
                let gap = (est.mean - analytic).abs() / analytic.abs();
                let pass = gap <= 0.05 || est.contains(analytic);
                t.rows.push(vec![
                    Cell::Text(link.name().into()),
                    Cell::Num(analytic),
                    Cell::Num(est.mean),
                    Cell::Num(est.ci95_halfwidth),
                    Cell::Num(gap),
                    Cell::Int(est.replicates as i64),
                    Cell::Int(est.rejected as i64),
                    Cell::Text(if pass { "PASS" } else { "FAIL" }.into()),
                ]);
            }
            Ok(t)
        }
        Command::LoadPmf => {
            let mu = mean_macro_load(&net.params, &net.powers);
            let n_max = match &cli.grid {
                Some(g) => g
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("load-pmf grid must be the largest n, got `{g}`")))?,
                None => {
                    let mut total = 0.0;
                    let mut n = 0;
                    while total < 1.0 - 1e-13 && n < 1_000_000 {
                        total += cell_load_pmf(n, mu);
                        n += 1;
                    }
                    n.saturating_sub(1)
                }
            };
            let mut t = Table::new(&["row", "n", "value"]);
            for n in 0..=n_max {
                t.rows.push(vec![
                    Cell::Text("pmf".into()),
                    Cell::Int(n as i64),
                    Cell::Num(cell_load_pmf(n, mu)),
                ]);
            }
            let u = underload_probability(net.params.k_m, &net.params, &net.powers);
            let k = Cell::Int(net.params.k_m as i64);
            t.rows.push(vec![Cell::Text("mean_load".into()), Cell::Text(String::new()), Cell::Num(mu)]);
            t.rows.push(vec![Cell::Text("underload_exact".into()), k.clone(), Cell::Num(u.exact)]);
            t.rows.push(vec![Cell::Text("underload_bound".into()), k, Cell::Num(u.bound)]);
            Ok(t)
        }
    }
}

fn derive_table(net: &Network) -> Table {
    let d = &net.derived;
    let mut t = Table::new(&["quantity", "value"]);
    let a = d.activity;
    for (name, v) in [
        ("delta", d.delta),
        ("beta_m", d.beta_m),
        ("beta_s", d.beta_s),
        ("beta_b", d.beta_b),
        ("e_sd_delta", d.e_sd_delta),
        ("e_sb_delta", d.e_sb_delta),
        ("a_m", d.a_m),
        ("a_s", d.a_s),
        ("a_b", d.a_b),
        ("g_m", d.g_m),
        ("g_s", d.g_s),
        ("g_u", d.g_u),
        ("lambda_u_tilde", d.lambda_u_tilde),
        ("assoc_m", d.assoc_m),
        ("assoc_s", d.assoc_s),
        ("nu_m_d", d.nu_m_d),
        ("nu_m_u", d.nu_m_u),
        ("nu_b_d", d.nu_b_d),
        ("nu_b_u", d.nu_b_u),
        ("delta_s", d.delta_s as f64),
        ("activity_m_dl", a.m_dl),
        ("activity_s_dl", a.s_dl),
        ("activity_b_dl", a.b_dl),
        ("activity_m_ul", a.m_ul),
        ("activity_s_ul", a.s_ul),
        ("activity_b_ul", a.b_ul),
    ] {
        t.rows.push(vec![Cell::Text(name.into()), Cell::Num(v)]);
    }
    t
}

/// Resolves the configuration of a parsed command line.
pub fn resolve_cli(cli: &Cli) -> hetnet_core::Result<ResolvedConfig> {
    let text = cli
        .config
        .as_ref()
        .map(|p| std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display()))))
        .transpose()?;
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("sim.seed={s}"));
    }
    if let Some(r) = cli.replicates {
        overrides.push(format!("sim.replicates={r}"));
    }
    resolve(&ConfigSources {
        preset: cli.preset.as_deref(),
        file_text: text.as_deref(),
        overrides: &overrides,
    })
}

/// Metadata lines that pin down the run.
pub fn metadata(cli: &Cli, cfg: &ResolvedConfig) -> Vec<String> {
    let mut meta = vec![
        format!("hetnet {VERSION}"),
        format!("command = {}", cli.command.name()),
        format!("preset = {}", cfg.preset),
        format!("seed = {}", cfg.sim.seed),
    ];
    if let Some(g) = &cli.grid {
        meta.push(format!("grid = {g}"));
    }
    if let Some(t) = cli.tol {
        meta.push(format!("tol = {t:?}"));
    }
    if !cli.scheme.is_empty() {
        meta.push(format!("scheme = {}", cli.scheme.join(",")));
    }
    meta.extend(cfg.entries().into_iter().map(|(k, v)| format!("{k} = {v}")));
    meta
}

/// Runs a parsed command line, writing the CSV. Returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    match try_run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            exit_code(&e)
        }
    }
}

fn try_run(cli: &Cli) -> hetnet_core::Result<()> {
    let cfg = resolve_cli(cli)?;
    let table = execute(cli, &cfg)?;
    let meta = metadata(cli, &cfg);
    match &cli.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            emit_csv(f, &meta, &table)
        }
        None => emit_csv(io::stdout().lock(), &meta, &table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -4.9e-324, 0.0, 123456789.123456789] {
            let s = format_number(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(format_number(f64::NAN), "NaN");
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("3", 0.0, 1.0).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("1:3:3", 0.0, 0.0).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(parse_grid("2, 5", 0.0, 0.0).unwrap(), vec![2.0, 5.0]);
        assert!(parse_grid("x", 0.0, 1.0).is_err());
        assert!(parse_grid("0", 0.0, 1.0).is_err());
    }

    #[test]
    fn schemes() {
        assert_eq!(parse_scheme("fixed:0.5").unwrap(), AllocationScheme::Fixed(0.5));
        assert_eq!(parse_scheme("one-tier").unwrap(), AllocationScheme::OneTier);
        assert!(parse_scheme("fixed:x").is_err());
        assert!(parse_scheme("greedy").is_err());
    }

    #[test]
    fn empty_table_is_header_only() {
        let mut buf = Vec::new();
        emit_csv(&mut buf, &["m".into()], &Table::new(&["a", "b"])).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# m\na,b\n");
    }

    #[test]
    fn exit_codes_are_distinct() {
        let errs = [
            Error::Config(String::new()),
            Error::InvalidParams(String::new()),
            Error::Domain { func: "f", msg: String::new() },
            Error::DegenerateModel(String::new()),
            Error::Io(String::new()),
        ];
        let codes: Vec<i32> = errs.iter().map(exit_code).collect();
        assert_eq!(codes, vec![2, 3, 4, 7, 10]);
    }
}
