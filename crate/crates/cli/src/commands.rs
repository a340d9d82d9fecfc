//! Subcommand implementations. Each writes a `#` metadata block followed by
//! CSV rows.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hyperangle::density::{
    f_xi, g2_theoretical, kink_locations, r2_theoretical, recover_length_spectrum, vol_rm_main,
    vol_rm_numeric, DensityContext, DistanceSpectrum, RecoverSettings, SpectrumEntry,
};
use hyperangle::empirical::{pair_correlation, CurveMode};
use hyperangle::lattice::{
    cone_filter, distance_spectrum, enumerate_lorentz, fit_covolume, load_orbit, lorentz_level_counts,
    psl2z_orbit, write_orbit_annotated, Cone, CovolumeFit, LevelCounts, OrbitDataset,
};
use hyperangle::quad::QuadSettings;
use hyperangle::util::{fmt_sig17, parse_grid};

use crate::{Backend, Cli, Cmd, DensityCmd, OrbitCmd, SourceArgs};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit code for an error: the library's class if there is one, 3 for I/O,
/// 2 otherwise.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if let Some(h) = cause.downcast_ref::<hyperangle::Error>() {
            return h.exit_code();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    2
}

struct Report {
    out: Box<dyn Write>,
}

impl Report {
    fn open(cli: &Cli, args: &[String], command: &str) -> Result<Report> {
        let out: Box<dyn Write> = match &cli.output {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(std::io::stdout())),
        };
        let mut r = Report { out };
        if !command.is_empty() {
            r.meta(&format!("hyperangle {VERSION} {command}"))?;
            r.meta(&format!("args: {}", args.join(" ")))?;
        }
        Ok(r)
    }

    fn meta(&mut self, line: &str) -> Result<()> {
        writeln!(self.out, "# {line}")?;
        Ok(())
    }

    fn row(&mut self, cells: &[String]) -> Result<()> {
        writeln!(self.out, "{}", cells.join(","))?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

fn quad(cli: &Cli) -> Result<QuadSettings> {
    Ok(QuadSettings::new(cli.quad_abs_tol, cli.quad_rel_tol, cli.quad_max_subdiv)?)
}

fn list(name: &str, spec: &str) -> Result<Vec<f64>> {
    let v = parse_grid(spec).ok_or_else(|| anyhow!("--{name}: cannot parse '{spec}'"))?;
    if v.is_empty() {
        bail!("--{name} is empty");
    }
    Ok(v)
}

fn increasing(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !(*x > 0.0)) || v.windows(2).any(|w| !(w[1] > w[0])) {
        bail!("--{name} must be positive and increasing");
    }
    Ok(())
}

fn s(x: f64) -> String {
    fmt_sig17(x)
}

pub fn dispatch(cli: &Cli, args: &[String]) -> Result<()> {
    match &cli.cmd {
        Cmd::Orbit(OrbitCmd::Gen(a)) => orbit_gen(cli, args, &a.source),
        Cmd::Orbit(OrbitCmd::Info { file }) => orbit_info(cli, args, file),
        Cmd::Paircorr(a) => paircorr(cli, args, a),
        Cmd::VolumeCheck(a) => volume_check(cli, args, a),
        Cmd::Asymptotics(a) => asymptotics(cli, args, a),
        Cmd::SpectrumRecover(a) => spectrum_recover(cli, args, a),
        Cmd::Density(DensityCmd::PlotF(a)) => plot_f(cli, args, a),
    }
}

fn backend(src: &SourceArgs) -> Result<Backend> {
    match (&src.orbit, src.backend) {
        (Some(_), None | Some(Backend::File)) => Ok(Backend::File),
        (Some(_), Some(b)) => bail!("--orbit conflicts with --backend {b:?}"),
        (None, Some(Backend::File)) => bail!("--backend file needs --orbit"),
        (None, Some(b)) => Ok(b),
        (None, None) => Ok(Backend::Psl2z),
    }
}

fn need_q(src: &SourceArgs) -> Result<f64> {
    src.q.ok_or_else(|| anyhow!("--q is required for generated orbits"))
}

/// Orbit points from the file or a backend.
fn load_points(cli: &Cli, src: &SourceArgs) -> Result<OrbitDataset> {
    Ok(match backend(src)? {
        Backend::File => {
            let path = src.orbit.as_ref().expect("checked by backend()");
            let ds = load_orbit(path).with_context(|| format!("loading {}", path.display()))?;
            if let Some(n) = src.n {
                if n != ds.n() {
                    bail!("--n {n} disagrees with the file's n = {}", ds.n());
                }
            }
            ds
        }
        Backend::Psl2z => {
            if src.n.is_some_and(|n| n != 2) {
                bail!("the psl2z backend lives in H²; drop --n or pass --n 2");
            }
            psl2z_orbit(need_q(src)?, cli.point_cap)?
        }
        Backend::Lorentz => {
            let n = src.n.ok_or_else(|| anyhow!("--n is required for the lorentz backend"))?;
            enumerate_lorentz(n, need_q(src)?, cli.point_cap)?
        }
    })
}

/// What the theory side needs: level counts or points.
struct Lattice {
    n: usize,
    q: f64,
    source: String,
    points: Option<OrbitDataset>,
    levels: Option<LevelCounts>,
}

impl Lattice {
    fn count_within(&self, q: f64) -> u64 {
        match (&self.levels, &self.points) {
            (Some(l), _) => l.count_within(q),
            (None, Some(p)) => p.count_within(q) as u64,
            (None, None) => 0,
        }
    }

    fn spectrum(&self) -> Result<DistanceSpectrum> {
        let t_max = (self.q * self.q / 2.0).acosh();
        Ok(match (&self.levels, &self.points) {
            (Some(l), _) => l.spectrum(t_max, &self.source)?,
            (None, Some(p)) => distance_spectrum(p, t_max)?,
            (None, None) => unreachable!("a lattice has points or levels"),
        })
    }
}

/// Like [`load_points`], but the lorentz backend only counts points.
fn load_lattice(cli: &Cli, src: &SourceArgs) -> Result<Lattice> {
    if backend(src)? == Backend::Lorentz {
        let n = src.n.ok_or_else(|| anyhow!("--n is required for the lorentz backend"))?;
        let q = need_q(src)?;
        return Ok(Lattice {
            n,
            q,
            source: "lorentz".into(),
            points: None,
            levels: Some(lorentz_level_counts(n, q)?),
        });
    }
    let ds = load_points(cli, src)?;
    Ok(Lattice {
        n: ds.n(),
        q: ds.q(),
        source: ds.source().to_string(),
        levels: ds.level_counts(),
        points: Some(ds),
    })
}

/// `--veff`, then `--calibrate`, then the value stored in the file.
fn resolve_veff(src: &SourceArgs, lat: &Lattice) -> Result<(f64, Option<CovolumeFit>)> {
    if let Some(v) = src.veff {
        if !(v > 0.0) {
            bail!("--veff must be positive");
        }
        return Ok((v, None));
    }
    if src.calibrate {
        let hi = src.fit_hi.unwrap_or(lat.q);
        let lo = src.fit_lo.unwrap_or(0.3 * hi);
        if hi > lat.q * (1.0 + 1e-12) {
            bail!("--fit-hi {hi} exceeds Q = {}", lat.q);
        }
        let fit = fit_covolume(lat.n, |q| lat.count_within(q), lo, hi, src.fit_samples)?;
        return Ok((fit.v_eff, Some(fit)));
    }
    if let Some(v) = lat.points.as_ref().and_then(|p| p.v_eff()) {
        return Ok((v, None));
    }
    bail!("the effective covolume is unknown: pass --veff or --calibrate")
}

fn veff_meta(r: &mut Report, v: f64, fit: &Option<CovolumeFit>) -> Result<()> {
    r.meta(&format!("veff={}", s(v)))?;
    if let Some(f) = fit {
        let (lo, hi) = (f.samples[0].0, f.samples[f.samples.len() - 1].0);
        r.meta(&format!(
            "veff_fit range={}:{} samples={} rel_rms={}",
            s(lo),
            s(hi),
            f.samples.len(),
            s(f.rel_rms)
        ))?;
    }
    Ok(())
}

fn orbit_gen(cli: &Cli, args: &[String], src: &SourceArgs) -> Result<()> {
    if backend(src)? == Backend::File {
        bail!("orbit gen needs --backend lorentz or psl2z");
    }
    let ds = load_points(cli, src)?;
    let mut lat = Lattice {
        n: ds.n(),
        q: ds.q(),
        source: ds.source().to_string(),
        levels: None,
        points: Some(ds),
    };
    let mut notes = vec![
        format!("generated by hyperangle {VERSION}"),
        format!("args: {}", args.join(" ")),
    ];
    if src.veff.is_some() || src.calibrate {
        let (v, fit) = resolve_veff(src, &lat)?;
        if let Some(f) = fit {
            notes.push(format!("veff_fit rel_rms={}", s(f.rel_rms)));
        }
        lat.points.as_mut().expect("points").set_v_eff(v)?;
    }
    let ds = lat.points.expect("points");
    let mut r = Report::open(cli, args, "")?;
    write_orbit_annotated(&ds, &notes, &mut r.out)?;
    r.finish()
}

fn orbit_info(cli: &Cli, args: &[String], file: &Path) -> Result<()> {
    let ds = load_orbit(file).with_context(|| format!("loading {}", file.display()))?;
    let mut r = Report::open(cli, args, "orbit info")?;
    r.row(&["key".into(), "value".into()])?;
    let t_max = (ds.q() * ds.q() / 2.0).acosh();
    let spec = distance_spectrum(&ds, t_max)?;
    let rows = [
        ("n", ds.n().to_string()),
        ("q", s(ds.q())),
        ("points", ds.len().to_string()),
        ("veff", ds.v_eff().map(s).unwrap_or_else(|| "na".into())),
        ("w", ds.w().to_string()),
        ("source", ds.source().to_string()),
        ("exact", ds.exact().is_some().to_string()),
        ("base_point", ds.base_index().is_some().to_string()),
        ("distinct_distances", spec.len().to_string()),
        (
            "smallest_distance",
            spec.entries().first().map(|e| s(e.t)).unwrap_or_else(|| "na".into()),
        ),
        ("largest_distance", ds.ts().last().map(|&t| s(t)).unwrap_or_else(|| "na".into())),
    ];
    for (k, v) in rows {
        r.row(&[k.into(), v])?;
    }
    r.finish()
}

fn parse_cone(parts: &[String], n: usize) -> Result<Cone> {
    let mut axis = None;
    let mut theta = None;
    for tok in parts.iter().flat_map(|p| p.split_whitespace()) {
        match tok.split_once('=') {
            Some(("axis", v)) => {
                let a = v
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| anyhow!("--cone: bad axis '{v}'"))?;
                axis = Some(a);
            }
            Some(("theta", v)) => {
                theta = Some(v.parse::<f64>().map_err(|_| anyhow!("--cone: bad theta '{v}'"))?);
            }
            _ => bail!("--cone expects axis=<a1,..,an> theta=<radians>, got '{tok}'"),
        }
    }
    let axis = axis.ok_or_else(|| anyhow!("--cone lacks axis="))?;
    let theta = theta.ok_or_else(|| anyhow!("--cone lacks theta="))?;
    if axis.len() != n {
        bail!("--cone axis has {} components, need {n}", axis.len());
    }
    Ok(Cone::new(axis, theta)?)
}

fn paircorr(cli: &Cli, args: &[String], a: &crate::PaircorrArgs) -> Result<()> {
    let xi = list("xi", &a.xi)?;
    increasing("xi", &xi)?;
    let ds = load_points(cli, &a.source)?;
    if ds.len() < 2 {
        bail!("the orbit has {} points; at least 2 are needed", ds.len());
    }
    let lat = Lattice {
        n: ds.n(),
        q: ds.q(),
        source: ds.source().to_string(),
        levels: ds.level_counts(),
        points: Some(ds),
    };
    let cone = a.cone.as_ref().map(|c| parse_cone(c, lat.n)).transpose()?;
    let (v, fit) = resolve_veff(&a.source, &lat)?;
    let ctx = DensityContext::new(lat.n, v, quad(cli)?)?;
    let spec = lat.spectrum()?;
    let full = lat.points.as_ref().expect("points");
    let target = match &cone {
        Some(c) => cone_filter(full, c)?,
        None => full.clone(),
    };
    if target.len() < 2 {
        bail!("only {} points inside the cone", target.len());
    }
    let curve = pair_correlation(&target, &xi, ctx.k())?;
    let trunc = a.truncation.unwrap_or(lat.q);

    let mut r = Report::open(cli, args, "paircorr")?;
    r.meta(&format!("n={} Q={} source={}", lat.n, s(lat.q), lat.source))?;
    veff_meta(&mut r, v, &fit)?;
    r.meta(&format!("k={}", s(ctx.k())))?;
    r.meta(&format!("point_count={}", curve.point_count))?;
    match &curve.mode {
        CurveMode::Full => r.meta("mode=full")?,
        CurveMode::Cone(c) => r.meta(&format!(
            "mode=cone axis={} theta={}",
            c.axis().iter().map(|&x| s(x)).collect::<Vec<_>>().join(","),
            s(c.theta())
        ))?,
    }
    r.meta(&format!("theory truncation ‖M‖ ≤ {} ({} distances)", s(trunc), spec.len()))?;
    let m = xi.len();
    let mut rows = Vec::with_capacity(m);
    let mut worst_tail: f64 = 0.0;
    for (i, &x) in xi.iter().enumerate() {
        let r2 = r2_theoretical(x, &spec, &ctx, Some(trunc))?;
        let g2 = g2_theoretical(x, &spec, &ctx, Some(trunc))?;
        worst_tail = worst_tail.max(r2.tail_estimate);
        let g_emp = if m < 2 {
            f64::NAN
        } else {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(m - 1));
            (curve.r2q[hi] - curve.r2q[lo]) / (xi[hi] - xi[lo])
        };
        rows.push(vec![
            s(x),
            s(curve.r2q[i]),
            s(r2.value),
            s(g2.value),
            s(g_emp),
            s(curve.r2q[i] / r2.value - 1.0),
        ]);
    }
    r.meta(&format!("r2_theory tail estimate ≤ {}", s(worst_tail)))?;
    r.meta(&format!(
        "pairs with the base point (e1 convention, not counted): {}",
        curve.base_pairs.last().copied().unwrap_or(0)
    ))?;
    r.row(&["xi", "r2q_empirical", "r2_theory", "g2_theory", "g2_empirical", "rel_err"].map(String::from))?;
    for row in rows {
        r.row(&row)?;
    }
    r.finish()
}

fn volume_check(cli: &Cli, args: &[String], a: &crate::VolumeArgs) -> Result<()> {
    let ts = list("t", &a.t)?;
    let xis = list("xi", &a.xi)?;
    let ctx = DensityContext::with_k(a.n, 1.0, quad(cli)?)?;
    let mut r = Report::open(cli, args, "volume-check")?;
    r.meta(&format!("n={} Q={}", a.n, s(a.q)))?;
    r.row(&["n", "q", "t", "xi", "main", "numeric", "numeric_error", "ratio", "error_scale"].map(String::from))?;
    for &t in &ts {
        for &x in &xis {
            let main = vol_rm_main(a.q, x, t, &ctx)?;
            let num = vol_rm_numeric(a.q, x, t, &ctx)?;
            r.row(&[
                a.n.to_string(),
                s(a.q),
                s(t),
                s(x),
                s(main.value),
                s(num.value),
                s(num.error),
                s(main.value / num.value),
                s(main.error_scale),
            ])?;
        }
    }
    r.finish()
}

fn asymptotics(cli: &Cli, args: &[String], a: &crate::AsymptoticsArgs) -> Result<()> {
    let xi = list("xi", &a.xi)?;
    let lat = load_lattice(cli, &a.source)?;
    let (v, fit) = resolve_veff(&a.source, &lat)?;
    let ctx = DensityContext::new(lat.n, v, quad(cli)?)?;
    let spec = lat.spectrum()?;
    let trunc = a.truncation.unwrap_or(lat.q);
    let mut r = Report::open(cli, args, "asymptotics")?;
    r.meta(&format!("n={} Q={} source={}", lat.n, s(lat.q), lat.source))?;
    veff_meta(&mut r, v, &fit)?;
    r.meta(&format!("k={}", s(ctx.k())))?;
    r.meta(&format!("truncation ‖M‖ ≤ {}", s(trunc)))?;
    r.row(&["xi", "g2_theory", "reference", "ratio", "tail_estimate", "terms"].map(String::from))?;
    let n = lat.n as i32;
    for &x in &xi {
        let g = g2_theoretical(x, &spec, &ctx, Some(trunc))?;
        let reference = (n - 1) as f64 * x.powi(n - 2);
        r.row(&[
            s(x),
            s(g.value),
            s(reference),
            s(g.value / reference),
            s(g.tail_estimate),
            g.terms.to_string(),
        ])?;
    }
    r.finish()
}

fn parse_synthetic(spec: &str) -> Result<DistanceSpectrum> {
    let mut entries = Vec::new();
    for part in spec.split(',') {
        let (t, m) = part
            .split_once(':')
            .ok_or_else(|| anyhow!("--synthetic expects t:mult pairs, got '{part}'"))?;
        let t: f64 = t.trim().parse().map_err(|_| anyhow!("--synthetic: bad distance '{t}'"))?;
        let mult: u64 = m.trim().parse().map_err(|_| anyhow!("--synthetic: bad multiplicity '{m}'"))?;
        entries.push(SpectrumEntry { t, mult });
    }
    entries.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(DistanceSpectrum::new(entries, "synthetic")?)
}

fn spectrum_recover(cli: &Cli, args: &[String], a: &crate::RecoverArgs) -> Result<()> {
    let quad = quad(cli)?;
    let (spec, ctx, label) = match &a.synthetic {
        Some(text) => {
            let n = a.source.n.unwrap_or(2);
            let ctx = match (a.source.veff, a.k) {
                (Some(_), Some(_)) => bail!("pass either --veff or --k"),
                (Some(v), None) => DensityContext::new(n, v, quad)?,
                (None, k) => DensityContext::with_k(n, k.unwrap_or(1.0), quad)?,
            };
            (parse_synthetic(text)?, ctx, "synthetic".to_string())
        }
        None => {
            let lat = load_lattice(cli, &a.source)?;
            let (v, _) = resolve_veff(&a.source, &lat)?;
            let ctx = DensityContext::new(lat.n, v, quad)?;
            (lat.spectrum()?, ctx, lat.source.clone())
        }
    };
    let settings = RecoverSettings {
        xi_min: a.xi_min,
        xi_max: a.xi_max,
        grid_points: a.grid_points,
        ..RecoverSettings::default()
    };
    let g2 = |x: f64| g2_theoretical(x, &spec, &ctx, None).map(|v| v.value).unwrap_or(f64::NAN);
    let found = recover_length_spectrum(&g2, ctx.v_eff(), ctx.n(), a.depth, &settings)?;
    let mut r = Report::open(cli, args, "spectrum-recover")?;
    r.meta(&format!("n={} k={} veff={} source={label}", ctx.n(), s(ctx.k()), s(ctx.v_eff())))?;
    r.meta(&format!(
        "grid={}:{}:{} depth={}",
        s(a.xi_min),
        s(a.xi_max),
        a.grid_points,
        a.depth
    ))?;
    if found.len() < a.depth {
        r.meta(&format!("recovered {} of {} requested distances", found.len(), a.depth))?;
    }
    r.row(&["index", "t_recovered", "mult_recovered", "t_reference", "mult_reference", "abs_dt"].map(String::from))?;
    for (i, e) in found.entries().iter().enumerate() {
        let (tr, mr, dt) = match spec.entries().get(i) {
            Some(x) => (s(x.t), x.mult.to_string(), s((e.t - x.t).abs())),
            None => ("na".into(), "na".into(), "na".into()),
        };
        r.row(&[(i + 1).to_string(), s(e.t), e.mult.to_string(), tr, mr, dt])?;
    }
    r.finish()
}

fn plot_f(cli: &Cli, args: &[String], a: &crate::PlotFArgs) -> Result<()> {
    let (var, val) = a
        .fix
        .split_once('=')
        .ok_or_else(|| anyhow!("--fix expects xi=<value> or l=<value>"))?;
    let val: f64 = val.trim().parse().map_err(|_| anyhow!("--fix: bad value '{val}'"))?;
    if !(val > 0.0) {
        bail!("--fix value must be positive");
    }
    let (lo, hi) = a
        .range
        .split_once(':')
        .and_then(|(l, h)| Some((l.trim().parse::<f64>().ok()?, h.trim().parse::<f64>().ok()?)))
        .ok_or_else(|| anyhow!("--range expects lo:hi"))?;
    if !(lo > 0.0 && hi > lo) || a.points < 2 {
        bail!("--range needs 0 < lo < hi and --points at least 2");
    }
    let ctx = DensityContext::with_k(a.n, 1.0, quad(cli)?)?;
    let mut r = Report::open(cli, args, "density plot-f")?;
    r.meta(&format!("n={}", a.n))?;
    let free = match var.trim() {
        "xi" => {
            r.meta(&format!(
                "xi={} kinks at l={},{}",
                s(val),
                s(2.0 * (val / 2.0).asinh()),
                s(val.asinh())
            ))?;
            "l"
        }
        "l" => {
            let (k1, k2) = kink_locations(val)?;
            r.meta(&format!("l={} kinks at xi={},{}", s(val), s(k1), s(k2)))?;
            "xi"
        }
        other => bail!("--fix variable must be xi or l, got '{other}'"),
    };
    r.row(&[free.to_string(), "f".to_string()])?;
    for i in 0..a.points {
        let x = lo + (hi - lo) * i as f64 / (a.points - 1) as f64;
        let f = if free == "l" { f_xi(val, x, &ctx)? } else { f_xi(x, val, &ctx)? };
        r.row(&[s(x), s(f)])?;
    }
    r.finish()
}
