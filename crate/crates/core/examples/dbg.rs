use polarsphere::dynamics::*;
use polarsphere::params::*;
use polarsphere::signal::preset;
use polarsphere::spectral::*;

fn main() {
    let grid = SphereGrid::new(8);
    let sig = preset::axisymmetric(&grid, 0.5, 0.2, 1.0).unwrap();
    let p = ModelParams::default_with(Diffusivity::Infinite, 1.0, 10.0);
    let e = Engine::new(&p, &sig, 32).unwrap();
    let hs = e.homogeneous_state();
    println!("hs: u={} v={} w={:?} mass={}", hs.u.mean(), hs.v.mean(), hs.w, hs.mass());
    println!("total_mass={}", e.total_mass);
    let bump = random_field(e.grid(), 17, 2.0).scale(0.01);
    let st = TrajectoryState { t: 0.0, u: hs.u.add(&bump), v: hs.v.clone(), w: hs.w.clone() };
    println!("st mass = {}", st.mass());
    match e.step_imex_dinf(&st, 1e-3) {
        Ok(next) => println!("step ok: min_u={} min_v={} w={:?} mass={}", next.u.min_on_grid(), next.v.min_on_grid(), next.w, next.mass()),
        Err(err) => println!("step err: {err}"),
    }
}
