//! Exact and sampled occupancy measures, the divergences between them and the
//! optimal discriminator they induce.
//!
//! `cargo run --release --example occupancy_divergence`

use stepwise_rl::envs::{Env, EnvId};
use stepwise_rl::expert::ExpertPolicy;
use stepwise_rl::metrics::{
    binomial_check, causal_entropy, js_divergence, kl_divergence, occupancy_analytic, occupancy_mc,
    TabularPolicy,
};
use stepwise_rl::reflect_inverse::{discriminator_objective, optimal_discriminator_tabular};

fn main() -> stepwise_rl::Result<()> {
    let gamma = 0.99;
    for id in EnvId::ALL {
        let env = Env::builtin(id);
        let mdp = env.underlying_mdp();
        let uniform = TabularPolicy::uniform(&mdp);
        let expert = TabularPolicy::from_expert(&mdp, &ExpertPolicy::plan(&mdp)?);
        let rho_u = occupancy_analytic(&mdp, &uniform, gamma)?;
        let rho_e = occupancy_analytic(&mdp, &expert, gamma)?;
        let sampled = occupancy_mc(&env, &uniform, gamma, 5000, 1)?;
        let check = binomial_check(&rho_u, &sampled, 5000, 3.0);

        let d_star = optimal_discriminator_tabular(&rho_u.weights, &rho_e.weights);
        let objective = discriminator_objective(&d_star, &rho_u.weights, &rho_e.weights);
        let js = js_divergence(&rho_u, &rho_e);
        println!("{id}:");
        println!(
            "  uniform vs expert: JS {js:.4}, KL(expert||uniform) {:.4}",
            kl_divergence(&rho_e, &rho_u)
        );
        println!(
            "  discriminator objective at D* {objective:.6} = 2 JS - 2 ln 2 = {:.6}",
            2.0 * js - 2.0 * std::f64::consts::LN_2
        );
        println!(
            "  causal entropy: uniform {:.4}, expert {:.4}",
            causal_entropy(&mdp, &uniform, gamma)?,
            causal_entropy(&mdp, &expert, gamma)?.abs()
        );
        println!(
            "  5000 sampled episodes: {} of {} entries beyond 3 sigma (max z {:.2})",
            check.violations, check.entries, check.max_z
        );
    }
    Ok(())
}
