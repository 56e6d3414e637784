from typing import Dict, List, Optional

from jinja2 import Template

_HTML_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
    <meta charset="utf-8">
    <title>Memcapacitor Reservoir Report: {{ report.task }}</title>
    <style>
      body { font-family: Arial, sans-serif; margin: 2em; }
      table { border-collapse: collapse; margin: 0.5em 0; }
      td, th { border: 1px solid #ccc; padding: 0.2em 0.6em; text-align: right; }
      pre { background: #f8f8f8; padding: 1em; }
      img { max-width: 100%; height: auto; }
    </style>
</head>
<body>
  <h1>Memcapacitor Reservoir Report: {{ report.task }}</h1>
  <p>Seed: {{ report.seed }}</p>
  <h2>Metrics</h2>
  {% for split, values in metrics %}
    <h3>{{ split }}</h3>
    <ul>
    {% for key, value in values %}
      <li>{{ key }}: {{ value }}</li>
    {% endfor %}
    </ul>
  {% endfor %}
  <h2>Energy</h2>
  <ul>
  {% for key, value in energy %}
    <li>{{ key }}: {{ value }}</li>
  {% endfor %}
  </ul>
  {% if report.diagnostics %}
    <h2>Diagnostics</h2>
    <ul>
    {% for key, value in report.diagnostics|dictsort %}
      <li>{{ key }}: {{ value }}</li>
    {% endfor %}
    </ul>
  {% endif %}
  {% for image in images %}
    <h2>{{ image.title }}</h2>
    <img src="{{ image.path }}" alt="{{ image.title }}">
  {% endfor %}
  <h2>Configuration</h2>
  <pre>{% for section, keys in report.config|dictsort %}[{{ section }}]
{% for key, value in keys|dictsort %}{{ key }} = {{ value }}
{% endfor %}
{% endfor %}</pre>
</body>
</html>
"""


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _flatten(metrics: Dict, prefix: str = "") -> List:
    """Flatten nested metric dicts into (section, [(key, value)]) pairs."""
    sections = []
    scalars = []
    for key in sorted(metrics):
        value = metrics[key]
        if isinstance(value, dict):
            sections.extend(_flatten(value, f"{prefix}{key} / "))
        elif key not in ("confusion", "classes"):
            scalars.append((key, _fmt(value)))
    if scalars:
        sections.insert(0, (prefix.rstrip(" /") or "summary", scalars))
    return sections


def format_html_report(report: Dict, images: Optional[List[Dict]] = None) -> str:
    """
    Render an HTML summary of a task report.

    :param report: TaskReport.as_dict() output
    :param images: Optional [{"title": ..., "path": ...}] figures, paths relative to the page
    :return: HTML document as a string
    """
    tmpl = Template(_HTML_TEMPLATE)
    energy = []
    for section, values in _flatten(report.get("energy", {})):
        energy.extend(
            (key if section == "summary" else f"{section}: {key}", v) for key, v in values
        )
    return tmpl.render(
        report=report,
        metrics=_flatten(report.get("metrics", {})),
        energy=energy,
        images=images or [],
    )
