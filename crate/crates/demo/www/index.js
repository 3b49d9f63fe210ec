import init, { contourSvg, robustnessValue, conclude, simulate } from "./pkg/trialgen_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

function show(el, fn) {
  el.classList.remove("error");
  try {
    fn();
  } catch (e) {
    el.classList.add("error");
    el.textContent = String(e);
  }
}

function draw() {
  const varW = num("var-w");
  const sigma = num("sigma");
  const bound = num("bound");
  const r2 = $("bench-r2").value === "" ? NaN : num("bench-r2");
  show($("contour"), () => {
    $("contour").innerHTML = contourSvg(varW, sigma, bound, r2, num("bench-rho"));
  });
  show($("rv"), () => {
    const rv = robustnessValue(num("q"), bound, varW, sigma);
    $("rv").textContent = `RV = ${rv.toFixed(4)}: a confounder with R² = ρ² = ${rv.toFixed(4)} moves the bound by q·|bound|.`;
  });
}

await init();
$("draw").addEventListener("click", draw);
$("conclude").addEventListener("click", () =>
  show($("conclusion"), () => {
    $("conclusion").textContent = conclude(
      num("lower"), $("lower-robust").checked,
      num("upper"), $("upper-robust").checked,
      $("treatment").value, $("comparator").value,
    );
  }),
);
$("simulate").addEventListener("click", () => {
  $("sim-out").textContent = "running...";
  setTimeout(() =>
    show($("sim-out"), () => {
      $("sim-out").textContent = simulate($("scenario").value, parseInt($("reps").value, 10), BigInt($("seed").value));
    }), 0);
});
draw();
