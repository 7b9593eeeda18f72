import os
import html
import logging
from datetime import datetime
from typing import Dict, Optional

logger = logging.getLogger(__name__)

PDF_SUBDIR = "report_pdf"

STYLE = """
body { font-family: sans-serif; margin: 24px; color: #222; }
h1 { font-size: 20px; } h2 { font-size: 16px; margin-top: 24px; }
table { border-collapse: collapse; margin: 8px 0; }
td, th { border: 1px solid #bbb; padding: 3px 8px; font-size: 12px; text-align: right; }
th { background: #eee; text-align: left; }
.fail { color: #b00; font-weight: bold; } .ok { color: #070; }
"""


def _fmt(value) -> str:
    if isinstance(value, bool):
        return f'<span class="{"ok" if value else "fail"}">{value}</span>'
    if isinstance(value, float):
        return f"{value:.6g}"
    return html.escape(str(value))


def _table(title: str, rows: Dict[str, object]) -> str:
    body = "".join(f"<tr><th>{html.escape(str(k))}</th><td>{_fmt(v)}</td></tr>" for k, v in rows.items())
    return f"<h2>{html.escape(title)}</h2><table>{body}</table>"


def generate_html_report(result, diagram_path: Optional[str] = None) -> str:
    """
    HTML summary of one run: background, constants, weights, Glimm audit,
    entropy residuals and the front diagram inlined as SVG.
    """
    prepared = result.prepared
    bg = prepared.background
    field = result.field
    summary = result.summary()

    audit_failures = [r for r in field.event_log if r.audit_passed is False]
    sections = [
        _table("Background", {
            "p_plus": bg.U_plus.p, "p_bar": bg.p_bar, "p_star": bg.p_star,
            "boundary slope k_b": bg.k_b, "fan k1": bg.k1, "fan k2": bg.k2,
            "fan strength S_bar": bg.S_bar, "TV constant": bg.tv_constant,
        }),
        _table("Constants", prepared.constants.to_dict()),
        _table("Weights", {k: v for k, v in prepared.weights.to_dict().items() if k != "overridden"}),
        _table("Run", {k: v for k, v in summary.items() if not isinstance(v, (dict, list))}),
        _table("Interactions per case", dict(sorted(field.stats.per_case.items()))),
        _table("Entropy", result.entropy.summary()),
        _table("Glimm audit", {
            "events": len(field.event_log),
            "audit failures": len(audit_failures),
            "F(0+)": prepared.initial.F,
            "F(x)": field.glimm_trace[-1].F if field.glimm_trace else float("nan"),
            "non-increasing": result.functional_non_increasing,
        }),
    ]
    if prepared.overridden_gates:
        sections.append(_table("Overridden gates", {name: "overridden" for name in prepared.overridden_gates}))

    diagram = ""
    if diagram_path and os.path.exists(diagram_path):
        with open(diagram_path, "r", encoding="utf-8") as f:
            svg = f.read()
        # drop the XML prolog and doctype so the SVG can be inlined
        diagram = "<h2>Fronts</h2>" + svg[svg.find("<svg"):]

    title = f"Corner flow run: {html.escape(result.config.name)}"
    return (f"<!DOCTYPE html><html><head><meta charset='utf-8'><title>{title}</title>"
            f"<style>{STYLE}</style></head><body><h1>{title}</h1>"
            f"<p>delta = {result.config.delta:g}, epsilon = {result.config.perturbation.epsilon:g}, "
            f"x = {field.x:g}</p>" + "".join(sections) + diagram + "</body></html>")


def generate_pdf_from_html(html_filename: str, output_dir: str) -> str:
    """
    Generate PDF from HTML file using WeasyPrint

    Args:
        html_filename (str): Path to HTML file
        output_dir (str): Directory that receives the PDF subdirectory

    Returns:
        str: Path to generated PDF file
    """
    logger.info(f"Converting HTML to PDF using WeasyPrint: {html_filename}")

    pdf_dir = os.path.join(output_dir, PDF_SUBDIR)
    os.makedirs(pdf_dir, exist_ok=True)
    pdf_basename = os.path.basename(html_filename).replace('.html', '')
    pdf_filename = os.path.join(pdf_dir, f"{pdf_basename}.pdf")

    try:
        from weasyprint import HTML

        HTML(filename=html_filename).write_pdf(pdf_filename)
        if os.path.exists(pdf_filename):
            logger.info(f"Successfully converted '{html_filename}' to '{pdf_filename}'")
            return pdf_filename
        raise RuntimeError("PDF file was not created successfully")
    except ImportError:
        error_msg = "WeasyPrint not available. Install with: pip install weasyprint"
        logger.error(error_msg)
        raise ImportError(error_msg)
    except Exception as e:
        error_msg = f"Error converting HTML to PDF with WeasyPrint: {str(e)}"
        logger.error(error_msg)
        raise RuntimeError(error_msg)


def write_report(result, output_dir: str, diagram_path: Optional[str] = None, pdf: bool = False) -> Dict[str, str]:
    os.makedirs(output_dir, exist_ok=True)
    html_filename = os.path.join(output_dir, f"{result.config.name}_report.html")
    with open(html_filename, 'w', encoding='utf-8') as f:
        f.write(generate_html_report(result, diagram_path))
    logger.info(f"Run report saved to {html_filename} at {datetime.now():%Y-%m-%d %H:%M:%S}")

    paths = {"report": html_filename}
    if pdf:
        try:
            paths["report_pdf"] = generate_pdf_from_html(html_filename, output_dir)
        except (ImportError, RuntimeError) as pdf_error:
            logger.error(f"Error generating PDF: {str(pdf_error)}")
    return paths
