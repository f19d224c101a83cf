use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;

use quicfec_core::codec::{
    rlc_coefficients, BlockCodeParams, ConvCodeParams, ParkMiller, ReedSolomon, SchemeSpecificValue,
};
use quicfec_core::gf256::{gf_inv, gf_mul};
use quicfec_core::netem::GeParams;
use quicfec_core::sched::burst_recovery_enumeration;
use quicfec_core::transport::wire::{PnLen, PublicHeader};
use quicfec_core::xdesign::{
    ecdf_by_contender, ratio_table, read_results, run_campaign_to_file, write_ecdf, write_ratios,
    wsp_sample, CampaignSpec, Execution, Metric, ParamSpace, SCHEMA_VERSION,
};

#[derive(Parser)]
#[command(
    name = "quicfec",
    version,
    about = "Packet-level FEC experiments over a simulated QUIC-like transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write results.csv. Rows already in the output are kept.
    Run {
        #[arg(long)]
        campaign: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (1 runs sequentially).
        #[arg(long)]
        jobs: Option<usize>,
        /// Cells computed between two writes.
        #[arg(long, default_value_t = 16)]
        batch: usize,
    },
    /// Print WSP-sampled points of a parameter space as CSV.
    Sample {
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 120)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-contender ECDF of a metric, or per-point ratios between two contenders.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// fraction_received or rebuffer_ms
        #[arg(long, conflicts_with = "ratio")]
        ecdf: Option<String>,
        /// A:B, ratio of contender A over contender B
        #[arg(long, requires = "metric")]
        ratio: Option<String>,
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print reference values computed from first principles.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// Park-Miller outputs from a seed.
    Prng {
        #[arg(long, default_value_t = 1)]
        seed: u32,
        #[arg(long, default_value_t = 5)]
        count: usize,
    },
    /// GF(256) product and inverses.
    Gf256 { a: u8, b: u8 },
    /// RLC coefficient vector.
    Rlc {
        #[arg(long, default_value_t = 1)]
        seed: u16,
        #[arg(long, default_value_t = 2)]
        window: usize,
        #[arg(long, default_value_t = 1.0)]
        density: f64,
    },
    /// Stationary loss rate of a Gilbert-Elliott channel.
    Ge {
        #[arg(long, default_value_t = 0.005)]
        p: f64,
        #[arg(long, default_value_t = 0.25)]
        r: f64,
        #[arg(long, default_value_t = 0.98)]
        k: f64,
        #[arg(long, default_value_t = 0.05)]
        h: f64,
    },
    /// Recoverable burst positions of an (n,k) block code.
    Burst {
        #[arg(long, default_value_t = 3)]
        n: u16,
        #[arg(long, default_value_t = 2)]
        k: u16,
        #[arg(long = "len", default_value_t = 2)]
        burst_len: usize,
    },
    /// Erasure patterns an (n,k) Reed-Solomon code recovers, by size.
    Rs {
        #[arg(long, default_value_t = 6)]
        n: u16,
        #[arg(long, default_value_t = 4)]
        k: u16,
    },
    /// Hex of a FEC-flagged public header.
    Header {
        #[arg(long, default_value_t = 0x0102030405060708)]
        cid: u64,
        #[arg(long, default_value_t = 7)]
        pn: u64,
        #[arg(long, default_value_t = 10)]
        fec_id: u32,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    schema: u32,
    #[serde(default)]
    space: ParamSpace,
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            campaign,
            out,
            jobs,
            batch,
        } => {
            let spec = CampaignSpec::load(&campaign)
                .with_context(|| format!("loading {}", campaign.display()))?;
            let exec = match jobs {
                Some(1) => Execution::Sequential,
                Some(n) => Execution::Parallel(n),
                None => Execution::Auto,
            };
            let n = run_campaign_to_file(&spec, &out, exec, batch)?;
            eprintln!("{n} rows written to {}", out.display());
        }
        Command::Sample {
            space,
            n,
            seed,
            out,
        } => {
            let text = std::fs::read_to_string(&space)
                .with_context(|| format!("reading {}", space.display()))?;
            let file: SpaceFile = toml::from_str(&text)?;
            if file.schema != SCHEMA_VERSION {
                bail!(
                    "unsupported schema {} (expected {SCHEMA_VERSION})",
                    file.schema
                );
            }
            let points = wsp_sample(&file.space, n, seed)?;
            let two = file.space.paths == 2;
            let mut w = csv::Writer::from_writer(output(out.as_ref())?);
            let mut hdr = vec!["point_id", "p1", "r1", "k1", "h1", "owd_ms"];
            if two {
                hdr.extend(["p2", "r2", "k2", "h2"]);
            }
            w.write_record(&hdr)?;
            for p in &points {
                let g = p.path1;
                let mut rec = vec![p.id.to_string()];
                rec.extend([g.p, g.r, g.k_good, g.h_bad, p.owd_ms].map(|x| x.to_string()));
                if let Some(g2) = p.path2 {
                    rec.extend([g2.p, g2.r, g2.k_good, g2.h_bad].map(|x| x.to_string()));
                }
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Command::Report {
            input,
            ecdf,
            ratio,
            metric,
            out,
        } => {
            let rows =
                read_results(&input).with_context(|| format!("reading {}", input.display()))?;
            let file = output(Some(&out))?;
            match (ecdf, ratio) {
                (Some(m), None) => {
                    let metric = Metric::parse(&m)?;
                    write_ecdf(file, metric, &ecdf_by_contender(&rows, metric)?)?;
                }
                (None, Some(pair)) => {
                    let Some((a, b)) = pair.split_once(':') else {
                        bail!("--ratio expects A:B");
                    };
                    let metric = Metric::parse(metric.as_deref().unwrap_or_default())?;
                    write_ratios(file, &ratio_table(&rows, a, b, metric)?)?;
                }
                _ => bail!("give --ecdf <metric> or --ratio A:B --metric <metric>"),
            }
        }
        Command::Oracle { which } => oracle(which)?,
    }
    Ok(())
}

fn oracle(which: Oracle) -> Result<()> {
    match which {
        Oracle::Prng { seed, count } => {
            let mut g = ParkMiller::new(seed)?;
            for _ in 0..count {
                println!("{}", g.next_u31());
            }
        }
        Oracle::Gf256 { a, b } => {
            println!("mul {a} {b} = {}", gf_mul(a, b));
            for x in [a, b] {
                match gf_inv(x) {
                    Ok(i) => println!("inv {x} = {i}"),
                    Err(e) => println!("inv {x}: {e}"),
                }
            }
        }
        Oracle::Rlc {
            seed,
            window,
            density,
        } => {
            let window_size = u8::try_from(window).context("window must fit in one byte")?;
            let params = ConvCodeParams::new(3, 2, window.max(2) as u16, density)?;
            let ssv = SchemeSpecificValue {
                seed,
                density_threshold_byte: params.density_threshold_byte(),
                window_first_id: 0,
                window_size,
            };
            println!("{:?}", rlc_coefficients(&ssv, window));
        }
        Oracle::Ge { p, r, k, h } => {
            let g = GeParams {
                p,
                r,
                k_good: k,
                h_bad: h,
            };
            g.validate()?;
            println!("stationary bad {:.6}", g.stationary_bad());
            println!("stationary loss {:.6}", g.stationary_loss());
        }
        Oracle::Burst { n, k, burst_len } => {
            let b = BlockCodeParams::new(n, k)?;
            for paths in [1, 2] {
                let e = burst_recovery_enumeration(b, burst_len, paths);
                println!(
                    "{paths} path(s): {}/{} = {:.4}",
                    e.recoverable,
                    e.starts,
                    e.fraction()
                );
            }
        }
        Oracle::Rs { n, k } => {
            let params = BlockCodeParams::new(n, k)?;
            if n > 16 {
                bail!("exhaustive enumeration is limited to n <= 16");
            }
            let code = ReedSolomon::new(params)?;
            let sources: Vec<Vec<u8>> = (0..k).map(|i| vec![i as u8 * 17 + 3; 8]).collect();
            let refs: Vec<&[u8]> = sources.iter().map(Vec::as_slice).collect();
            let repairs = code.encode(&refs)?;
            let n = n as usize;
            let mut by_size = vec![(0usize, 0usize); n + 1];
            for mask in 0u32..(1 << n) {
                let lost = mask.count_ones() as usize;
                let src: Vec<Option<&[u8]>> = (0..k as usize)
                    .map(|i| (mask >> i & 1 == 0).then_some(sources[i].as_slice()))
                    .collect();
                let rep: Vec<Option<&[u8]>> = (0..repairs.len())
                    .map(|j| (mask >> (k as usize + j) & 1 == 0).then_some(repairs[j].as_slice()))
                    .collect();
                by_size[lost].1 += 1;
                if code.recover(&src, &rep).is_ok_and(|r| r == sources) {
                    by_size[lost].0 += 1;
                }
            }
            for (lost, (ok, total)) in by_size.iter().enumerate() {
                println!("{lost} erasures: {ok}/{total} recovered");
            }
        }
        Oracle::Header { cid, pn, fec_id } => {
            let h = PublicHeader {
                connection_id: Some(cid),
                pn_len: match PnLen::for_pn(pn) {
                    PnLen::Six => PnLen::Six,
                    _ => PnLen::Four,
                },
                packet_number: pn,
                source_fec_id: Some(fec_id),
            };
            let mut buf = Vec::new();
            h.write(&mut buf)?;
            println!(
                "{}",
                buf.iter().map(|b| format!("{b:02x}")).collect::<String>()
            );
        }
    }
    Ok(())
}
