fn main() {
    let ctx = onemax_policy::kernel::ProblemContext::new(30, 512).unwrap();
    let row = onemax_policy::kernel::rls_row(&ctx, 7, 1).unwrap();
    println!("prob6 = {:.20e}", row.prob(6));
    println!("7/30  = {:.20e}", 7.0f64 / 30.0);
    println!("diff  = {:e}", (row.prob(6) - 7.0 / 30.0).abs());
    let row = onemax_policy::kernel::rls_row(&ctx, 7, 7).unwrap();
    println!("prob0 = {:.20e} vs {:.20e}", row.prob(0), 1.0/2035800.0);
}
