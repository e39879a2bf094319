// Minimal SVG chart helpers: line charts for daily series and scatter
// projections for 3-objective fronts. No canvas, so everything renders
// (and is testable) in a plain DOM.

const SVG_NS = "http://www.w3.org/2000/svg";

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color: string;
}

function svgElement<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) {
    el.setAttribute(key, String(value));
  }
  return el;
}

interface Extent {
  min: number;
  max: number;
}

function extent(values: number[]): Extent {
  if (!values.length) return { min: 0, max: 1 };
  let min = Infinity;
  let max = -Infinity;
  for (const v of values) {
    if (v < min) min = v;
    if (v > max) max = v;
  }
  if (min === max) {
    min -= 1;
    max += 1;
  }
  return { min, max };
}

function scale(domain: Extent, range: [number, number]): (v: number) => number {
  const span = domain.max - domain.min;
  return (v) => range[0] + ((v - domain.min) / span) * (range[1] - range[0]);
}

export function lineChart(
  container: HTMLElement,
  title: string,
  series: Series[],
  width = 360,
  height = 180,
): SVGSVGElement {
  container.replaceChildren();
  const pad = 28;
  const svg = svgElement("svg", {
    width,
    height,
    viewBox: `0 0 ${width} ${height}`,
    class: "chart",
    role: "img",
  });
  svg.dataset.title = title;
  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y);
  const sx = scale(extent(xs), [pad, width - 8]);
  const sy = scale(extent(ys.concat([0])), [height - pad, 8]);

  svg.appendChild(svgElement("line", {
    x1: pad, y1: height - pad, x2: width - 8, y2: height - pad,
    class: "axis",
  }));
  svg.appendChild(svgElement("line", {
    x1: pad, y1: 8, x2: pad, y2: height - pad, class: "axis",
  }));
  const label = svgElement("text", { x: pad, y: 14, class: "chart-title" });
  label.textContent = title;
  svg.appendChild(label);

  for (const s of series) {
    if (!s.x.length) continue;
    const points = s.x.map((x, k) => `${sx(x).toFixed(1)},${sy(s.y[k]).toFixed(1)}`);
    svg.appendChild(svgElement("polyline", {
      points: points.join(" "),
      fill: "none",
      stroke: s.color,
      "stroke-width": 1.6,
      "data-series": s.label,
    }));
  }
  container.appendChild(svg);
  return svg;
}

export interface ScatterGroup {
  label: string;
  points: [number, number, number][];
  color: string;
}

const PROJECTIONS: [number, number, string][] = [
  [0, 2, "infections vs cost"],
  [0, 1, "infections vs deaths"],
  [1, 2, "deaths vs cost"],
];

export function frontCompareChart(
  container: HTMLElement,
  groups: ScatterGroup[],
  highlight: [number, number, number] | null,
  width = 300,
  height = 220,
): void {
  container.replaceChildren();
  for (const [ix, iy, title] of PROJECTIONS) {
    const pad = 34;
    const svg = svgElement("svg", {
      width,
      height,
      viewBox: `0 0 ${width} ${height}`,
      class: "chart front-projection",
    });
    svg.dataset.title = title;
    const xs: number[] = [];
    const ys: number[] = [];
    for (const g of groups) {
      for (const p of g.points) {
        xs.push(p[ix]);
        ys.push(p[iy]);
      }
    }
    if (highlight) {
      xs.push(highlight[ix]);
      ys.push(highlight[iy]);
    }
    const sx = scale(extent(xs), [pad, width - 10]);
    const sy = scale(extent(ys), [height - pad, 12]);
    const label = svgElement("text", { x: pad, y: 14, class: "chart-title" });
    label.textContent = title;
    svg.appendChild(label);
    for (const g of groups) {
      for (const p of g.points) {
        svg.appendChild(svgElement("circle", {
          cx: sx(p[ix]).toFixed(1),
          cy: sy(p[iy]).toFixed(1),
          r: 3,
          fill: g.color,
          "fill-opacity": 0.75,
          "data-group": g.label,
        }));
      }
    }
    if (highlight) {
      svg.appendChild(svgElement("circle", {
        cx: sx(highlight[ix]).toFixed(1),
        cy: sy(highlight[iy]).toFixed(1),
        r: 6,
        class: "user-point",
        "data-group": "you",
      }));
    }
    container.appendChild(svg);
  }
}
