use rwi_core::rom::*;
use rwi_core::scenario::Scenario;
use rwi_core::survey::make_data_cube;

fn main() {
    for (tau, n, m) in [(0.45f64, 8usize, 4usize), (0.5, 10, 4), (0.55, 12, 5)] {
        let toml = format!(r#"
[domain]
width = 5.0
depth = 4.0

[medium]
c_bar = 1.0
omega_in = {{ x0 = 1.0, z0 = 2.25, x1 = 4.0, z1 = 3.5 }}

[[medium.inclusions]]
shape = "ellipse"
cx = 2.5
cz = 2.9
rx = 0.4
rz = 0.4
contrast = 1.1

[array]
m = {m}
spacing = 0.75

[pulse]
omega_c = 6.283185307179586
bandwidth = 1.5707963267948966

[time]
tau = {tau}
n = {n}
"#);
        let sc = Scenario::from_toml(&toml).unwrap();
        let r = sc.resolve().unwrap();
        let cube = make_data_cube(&r.medium, &r.array, &r.pulse, &r.time_grid, &r.boundaries).unwrap();
        let mass = symmetrize_regularize(&assemble_mass(&cube).unwrap(), 0.0).unwrap();
        let eig = nalgebra::SymmetricEigen::new(mass.dense().clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cond = ev[ev.len()-1] / ev[0];
        // rom exactness + galerkin agreement
        let (worst_snap, worst_ext) = match block_cholesky(&mass) {
            Err(e) => { println!("tau={tau} n={n} m={m}: cond={cond:.2e} chol FAILED {e}"); continue; }
            Ok(rf) => {
                let s = assemble_stiffness(&cube).unwrap();
                let p = rom_propagator(&rf, &s).unwrap();
                let horizon = n + 5;
                let steps = rom_step(&p, &rf, horizon).unwrap();
                let mut worst = 0.0f64;
                for j in 0..n {
                    let e = rf.block_column(j).unwrap();
                    worst = worst.max((&steps[j] - &e).norm() / e.norm());
                }
                let g = galerkin_extend(&mass, &s, &identity_block_column(n, m, n-2), &identity_block_column(n, m, n-1), horizon).unwrap();
                let mut worst_ext = 0.0f64;
                for (q, gj) in g.iter().enumerate() {
                    let via = rf.dense() * gj;
                    worst_ext = worst_ext.max((&via - &steps[n + q]).norm() / steps[n + q].norm());
                }
                (worst, worst_ext)
            }
        };
        println!("tau={tau} n={n} m={m}: cond={cond:.2e} snap_err={worst_snap:.2e} ext_err={worst_ext:.2e}");
    }
}
